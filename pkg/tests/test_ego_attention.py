"""Tests pour l'Ego-Attention et le bloc de convolution à filtre continu."""

import math

import numpy as np
import pytest

from autodiff import Tensor
from config import ModelConfig
from ego_attention import CfcParams, EaParams, cfc_block, ea_block, ego_attention_update
from errors import ContractError
from featurize import FeaturizerConfig, MolecularGraph, cutoff_weight, featurize, log_rbf
from molct import build_model
from parameter_store import ParameterStore
from readout import predict_energy_forces


def _scalar_ego_attention(n, coords, p, cfg):
    """Mise à jour EA écrite composante par composante (D = d = 2, une tête)."""
    count = len(n)
    out = []
    for i in range(count):
        rel = []
        for j in range(count):
            if i == j:
                e = p["self_edge"][0]
            else:
                r = math.sqrt(sum((coords[i][c] - coords[j][c]) ** 2 for c in range(3)))
                e = log_rbf(r, cfg)
            pos = [e[0] * p["w_p"][0][c] + e[1] * p["w_p"][1][c] + p["b_p"][0][c] for c in range(2)]
            x = [n[j][c] * pos[c] for c in range(2)]
            mu = (x[0] + x[1]) / 2.0
            var = ((x[0] - mu) ** 2 + (x[1] - mu) ** 2) / 2.0
            rel.append([(x[c] - mu) / math.sqrt(var + 1e-5) * p["gain"][0][c] + p["bias"][0][c] for c in range(2)])

        def project(vec, w):
            return [vec[0] * w[0][c] + vec[1] * w[1][c] for c in range(2)]

        q = project(rel[i], p["wq"])
        keys = [project(r, p["wk"]) for r in rel]
        values = [project(r, p["wv"]) for r in rel]
        scores = [(q[0] * k[0] + q[1] * k[1]) / math.sqrt(2.0) for k in keys]
        top = max(scores)
        weighted = []
        for j in range(count):
            decay = 1.0
            if j != i:
                r = math.sqrt(sum((coords[i][c] - coords[j][c]) ** 2 for c in range(3)))
                decay = cutoff_weight(r, cfg.r_cut)
            weighted.append(decay * math.exp(scores[j] - top))
        total = sum(weighted)
        alpha = [w / total for w in weighted]
        mixed = [sum(alpha[j] * values[j][c] for j in range(count)) for c in range(2)]
        increment = project(mixed, p["wo"])
        out.append([n[i][c] + increment[c] for c in range(2)])
    return np.array(out)


def _ea_setup(graph, dim=8, n_heads=2, use_ffn=False, seed=0, r_cut=6.0):
    cfg = FeaturizerConfig(d=dim, r_min=0.5, r_cut=r_cut, D=dim)
    store = ParameterStore(seed)
    params = EaParams.create(store, "ea", dim, dim, n_heads, use_ffn=use_ffn)
    features, _ = featurize(graph, cfg)
    return cfg, store, params, features


class TestScalarOracle:
    """Équivalence avec une réimplémentation scalaire indépendante."""

    def test_three_atoms_d2_single_head(self, rng):
        coords = np.array([[0.0, 0.0, 0.0], [1.3, 0.2, 0.0], [0.4, 1.6, -0.5]])
        graph = MolecularGraph([1, 6, 8], coords)
        cfg, store, params, features = _ea_setup(graph, dim=2, n_heads=1, r_cut=3.0)
        # Paramètres non triviaux partout
        for name in ("ea.b_p", "ea.norm.gain", "ea.norm.bias"):
            store[name].data[...] = rng.normal(size=store[name].shape)
        n = rng.normal(size=(3, 2))
        out = ea_block(Tensor(n), features, params)
        p = {
            "w_p": params.w_p.data, "b_p": params.b_p.data, "self_edge": params.self_edge.data,
            "gain": params.norm_gain.data, "bias": params.norm_bias.data,
            "wq": params.mha.wq.data, "wk": params.mha.wk.data, "wv": params.mha.wv.data, "wo": params.mha.wo.data,
        }
        expected = _scalar_ego_attention(n.tolist(), coords.tolist(), p, cfg)
        np.testing.assert_allclose(out.data, expected, rtol=0, atol=1e-12)


class TestEgoAttention:
    """Tests du bloc EA."""

    def test_single_node_update_matches_block(self, small_graph, rng):
        _, _, params, features = _ea_setup(small_graph)
        n = Tensor(rng.normal(size=(4, 8)))
        block = ea_block(n, features, params)
        for i in range(4):
            np.testing.assert_allclose(ego_attention_update(n, features, params, i).data[0], block.data[i],
                                       rtol=1e-12, atol=1e-14)

    def test_rotation_invariance(self, small_graph, rng, rotation_factory):
        _, _, params, features = _ea_setup(small_graph)
        rotated = small_graph.with_coords(small_graph.coords @ rotation_factory(rng).T + 3.0)
        features_rot, _ = featurize(rotated, FeaturizerConfig(d=8, r_min=0.5, r_cut=6.0, D=8))
        n = Tensor(rng.normal(size=(4, 8)))
        np.testing.assert_allclose(ea_block(n, features, params).data, ea_block(n, features_rot, params).data,
                                   atol=1e-10)

    def test_far_particle_gets_zero_weight(self):
        coords = np.array([[0.0, 0, 0], [1.0, 0, 0], [20.0, 0, 0]])
        graph = MolecularGraph([1, 1, 1], coords)
        _, _, params, features = _ea_setup(graph)
        _, alpha = ea_block(Tensor(np.ones((3, 8))), features, params, return_weights=True)
        assert alpha[0, 2] == 0.0
        assert alpha[2, 0] == 0.0 and alpha[2, 1] == 0.0
        assert alpha[2, 2] > 0.0

    def test_single_particle(self):
        graph = MolecularGraph([6], np.zeros((1, 3)))
        _, _, params, features = _ea_setup(graph)
        out = ea_block(Tensor(np.ones((1, 8))), features, params)
        assert out.shape == (1, 8)
        assert np.all(np.isfinite(out.data))

    def test_energy_is_not_pairwise_additive(self):
        """j et k hors de portée l'un de l'autre mais tous deux voisins de i : ∂²E/∂x_j∂x_k ≠ 0."""
        model = build_model(ModelConfig(dim_node=8, dim_edge=8, n_heads=2, n_rme_blocks=0, interaction="ea",
                                        n_iterations=1, r_cut=6.0))
        coords = np.array([[0.0, 0.0, 0.0], [-3.5, 0.4, 0.0], [3.5, 0.0, 0.3]])
        graph = MolecularGraph([6, 1, 8], coords)
        step = 1e-4
        shifted = []
        for sign in (1.0, -1.0):
            moved = coords.copy()
            moved[2, 0] += sign * step
            shifted.append(predict_energy_forces(graph.with_coords(moved), model).forces.data)
        # −∂F_j/∂x_k, nul pour toute somme de termes de paire coupés à r_cut
        mixed = (shifted[0][1] - shifted[1][1]) / (2.0 * step)
        assert np.linalg.norm(coords[1] - coords[2]) > 6.0
        assert np.abs(mixed).max() > 1e-6

    def test_ffn_requires_parameters(self, small_graph):
        _, _, params, features = _ea_setup(small_graph)
        with pytest.raises(ContractError):
            ea_block(Tensor(np.ones((4, 8))), features, params, use_ffn=True)

    def test_ffn_variant_changes_output(self, small_graph, rng):
        _, _, params, features = _ea_setup(small_graph, use_ffn=True)
        n = Tensor(rng.normal(size=(4, 8)))
        assert not np.allclose(ea_block(n, features, params).data, ea_block(n, features, params, use_ffn=True).data)


class TestCfc:
    """Tests du bloc de convolution à filtre continu."""

    def test_single_particle_has_no_message(self):
        graph = MolecularGraph([6], np.zeros((1, 3)))
        cfg = FeaturizerConfig(d=8, r_min=0.5, r_cut=6.0, D=8)
        params = CfcParams.create(ParameterStore(0), "cfc", 8, 8)
        features, _ = featurize(graph, cfg)
        n = Tensor(np.full((1, 8), 0.3))
        out = cfc_block(n, features, params)
        from attention import position_wise_ffn
        expected = n.data + position_wise_ffn(n, params.ffn).data
        np.testing.assert_allclose(out.data, expected, rtol=1e-12)

    def test_parameter_counts_at_matched_width(self):
        """Un bloc EA pèse environ deux fois moins qu'un bloc CFC."""
        ea_store, cfc_store = ParameterStore(0), ParameterStore(0)
        EaParams.create(ea_store, "ea", 32, 32, 8)
        CfcParams.create(cfc_store, "cfc", 32, 32)
        assert ea_store.count() == 5248
        assert cfc_store.count() == 8384
        assert ea_store.count() < cfc_store.count()

    def test_wide_filters(self):
        store = ParameterStore(0)
        CfcParams.create(store, "cfc", 8, 8, filters=64)
        assert store["cfc.filter.w2"].shape == (64, 64)


class TestLocality:
    """Une particule au-delà de la coupure n'a aucune influence."""

    @staticmethod
    def _pair(distance):
        return MolecularGraph([1, 1], np.array([[0.0, 0.0, 0.0], [distance, 0.0, 0.0]]))

    @pytest.mark.parametrize("interaction", ["ea", "niu", "cfc"])
    def test_far_atom_moves_without_effect(self, interaction):
        config = ModelConfig(dim_node=8, dim_edge=8, n_heads=2, interaction=interaction,
                             n_iterations=2, r_cut=6.0)
        model = build_model(config)
        near = predict_energy_forces(self._pair(7.0), model)
        far = predict_energy_forces(self._pair(12.0), model)
        isolated = predict_energy_forces(MolecularGraph([1], np.zeros((1, 3))), model)

        assert near.total_energy.item() == pytest.approx(far.total_energy.item(), rel=0, abs=1e-12)
        assert near.total_energy.item() == pytest.approx(2.0 * isolated.total_energy.item(), rel=1e-12)
        np.testing.assert_allclose(near.forces.data, far.forces.data, rtol=0, atol=1e-12)
        np.testing.assert_allclose(near.forces.data, 0.0, atol=1e-12)

    def test_update_ignores_neighbor_beyond_cutoff(self, rng):
        n = Tensor(rng.normal(size=(2, 8)))
        outputs = []
        for distance in (6.0, 9.0):
            _, _, params, features = _ea_setup(self._pair(distance))
            outputs.append(ea_block(n, features, params).data)
        lone = MolecularGraph([1], np.zeros((1, 3)))
        _, _, params, features = _ea_setup(lone)
        alone = ea_block(Tensor(n.data[:1]), features, params).data
        np.testing.assert_allclose(outputs[0], outputs[1], rtol=0, atol=1e-14)
        np.testing.assert_allclose(outputs[0][:1], alone, rtol=1e-12)
