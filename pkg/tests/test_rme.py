"""Tests pour l'encodeur moléculaire relationnel (RME)."""

import numpy as np
import pytest

from featurize import EmbeddingTables, FeaturizerConfig, MolecularGraph, RelationalEdge, featurize
from parameter_store import ParameterStore
from rme import RmeStack, rme_block, rme_forward, rme_keys_values, rme_mask


def _setup(graph, n_blocks=1, seed=0):
    cfg = FeaturizerConfig(d=8, r_min=0.5, r_cut=6.0, D=8)
    store = ParameterStore(seed)
    tables = EmbeddingTables.create(store, cfg)
    stack = RmeStack.create(store, "rme", n_blocks, 8, 8, 2)
    features, z = featurize(graph, cfg, tables)
    return features, z, stack, store


def _chain():
    coords = np.array([[0.0, 0, 0], [1.1, 0, 0], [2.2, 0.3, 0], [3.0, 1.0, 0.5]])
    edges = [RelationalEdge(0, 1, 0), RelationalEdge(1, 2, 1)]
    return MolecularGraph([6, 6, 8, 1], coords, edges)


class TestRmeMask:
    """Tests du masque de voisinage."""

    def test_neighbors_plus_self(self):
        features, _, _, _ = _setup(_chain())
        allowed = rme_mask(features).allowed
        assert allowed[0, 0] and allowed[0, 1] and not allowed[0, 2]
        assert allowed[3, 3] and not allowed[3, 2]

    def test_full_mask_without_relations(self):
        graph = MolecularGraph([6, 1], np.array([[0.0, 0, 0], [1.0, 0, 0]]))
        features, _, _, _ = _setup(graph)
        assert rme_mask(features).allowed.all()


class TestRmeBlock:
    """Tests d'un bloc RME."""

    def test_keys_include_relation_projection(self):
        features, z, stack, _ = _setup(_chain())
        params = stack.blocks[0]
        keys, values = rme_keys_values(z, features, params, i=0)
        v01 = features.relational_vector(0, 1)
        np.testing.assert_allclose(keys.data[1], z.data[1] + (v01 @ params.w_k2.data)[0])
        np.testing.assert_allclose(values.data[2], z.data[2])

    def test_isolated_node_ignores_others(self):
        """Un noeud sans relation ne voit que lui-même : sa sortie ne dépend pas des autres espèces."""
        graph = _chain()
        features, z, stack, _ = _setup(graph)
        out = rme_block(z, features, stack.blocks[0])
        other = MolecularGraph([7, 8, 1, 1], graph.coords, graph.relational_edges)
        features2, z2, _, _ = _setup(other)
        out2 = rme_block(z2, features2, stack.blocks[0])
        np.testing.assert_allclose(out.data[3], out2.data[3], rtol=1e-12)

    def test_geometry_blind(self):
        """Les coordonnées n'influencent pas la sortie du RME."""
        graph = _chain()
        features, z, stack, _ = _setup(graph)
        moved = graph.with_coords(graph.coords * 1.7)
        features2, z2, _, _ = _setup(moved)
        np.testing.assert_array_equal(
            rme_forward(z, features, stack).data, rme_forward(z2, features2, stack).data
        )

    def test_outputs_are_normalized(self):
        features, z, stack, _ = _setup(_chain())
        out = rme_block(z, features, stack.blocks[0])
        np.testing.assert_allclose(out.data.mean(axis=1), 0.0, atol=1e-10)

    def test_empty_stack_is_identity(self):
        features, z, _, _ = _setup(_chain(), n_blocks=0)
        assert rme_forward(z, features, RmeStack()) is z

    def test_parameter_count(self):
        _, _, _, store = _setup(_chain())
        # MHA 4·64 + W_K2, W_V2 2·64 + FFN (8·16 + 16 + 16·8 + 8) + 2 normalisations (2·16)
        assert store.count("rme") == 256 + 128 + 280 + 32

    @pytest.mark.parametrize("n_particles", [2, 5, 30])
    def test_one_parameter_set_any_size(self, graph_factory, n_particles):
        """Les mêmes paramètres s'appliquent à toute taille N, sortie N×D normalisée."""
        rng = np.random.default_rng(n_particles)
        graph = graph_factory(rng, n_particles, min_distance=0.5, box=max(1.5, 0.3 * n_particles))
        features, z, stack, store = _setup(graph)
        out = rme_forward(z, features, stack)
        assert out.shape == (n_particles, 8)
        assert np.all(np.isfinite(out.data))
        np.testing.assert_allclose(out.data.mean(axis=1), 0.0, atol=1e-10)
        assert store.count("rme") == 256 + 128 + 280 + 32

    @pytest.mark.parametrize("n_particles", [2, 5, 30])
    def test_permutation_equivariance(self, graph_factory, n_particles):
        rng = np.random.default_rng(100 + n_particles)
        graph = graph_factory(rng, n_particles, min_distance=0.5, box=max(1.5, 0.3 * n_particles))
        order = rng.permutation(n_particles)
        features, z, stack, _ = _setup(graph, n_blocks=2)
        features_perm, z_perm, _, _ = _setup(graph.permuted(order), n_blocks=2)
        out = rme_forward(z, features, stack).data
        out_perm = rme_forward(z_perm, features_perm, stack).data
        np.testing.assert_allclose(out_perm, out[order], rtol=0, atol=1e-10)

    def test_bond_order_changes_carbon_state(self):
        """Deux carbones de même espèce et même géométrie : liaison simple ou double, états distincts."""
        coords = np.array([[0.0, 0, 0], [1.3, 0, 0], [-0.6, 0.9, 0]])
        single = MolecularGraph([6, 8, 1], coords, [RelationalEdge(0, 1, 0), RelationalEdge(0, 2, 0)])
        double = MolecularGraph([6, 8, 1], coords, [RelationalEdge(0, 1, 1), RelationalEdge(0, 2, 0)])
        features, z, stack, _ = _setup(single)
        features2, z2, _, _ = _setup(double)
        np.testing.assert_array_equal(z.data, z2.data)
        out = rme_forward(z, features, stack).data
        out2 = rme_forward(z2, features2, stack).data
        assert not np.allclose(out[0], out2[0], atol=1e-6)
        assert not np.allclose(out[1], out2[1], atol=1e-6)

    def test_connectivity_separates_same_species(self):
        """sp3 (quatre voisins) contre sp2 (trois voisins) : même espèce centrale, sorties différentes."""
        coords = np.array([[0.0, 0, 0], [1.1, 0, 0], [-0.4, 1.0, 0], [-0.4, -0.5, 0.9], [-0.4, -0.5, -0.9]])
        species = [6, 1, 1, 1, 1]
        sp3 = MolecularGraph(species, coords, [RelationalEdge(0, j, 0) for j in range(1, 5)])
        sp2 = MolecularGraph(species, coords, [RelationalEdge(0, j, 0) for j in range(1, 4)])
        features, z, stack, _ = _setup(sp3)
        features2, z2, _, _ = _setup(sp2)
        out = rme_forward(z, features, stack).data
        out2 = rme_forward(z2, features2, stack).data
        assert not np.allclose(out[0], out2[0], atol=1e-6)
        np.testing.assert_allclose(out[1], out2[1], rtol=1e-12)
