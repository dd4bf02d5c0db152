"""Tests pour l'assemblage du modèle et la sérialisation."""

import numpy as np
import pytest
import yaml

from config import ModelConfig, RunConfig
from constants import MODEL_FILE_FORMAT
from datasets import build_species_map, gen_toy_mm_dataset, toy_mm_template
from errors import ConfigError, ParseError, VocabularyError
from model_file import load_model, read_model_file, save_model
from molct import build_model, molct_forward
from readout import Standardizer, predict_energy_forces


class TestBuildModel:
    """Tests de la construction du modèle."""

    def test_deterministic_for_seed(self, small_config):
        first, second = build_model(small_config, seed=4), build_model(small_config, seed=4)
        assert first.store.names() == second.store.names()
        for name in first.store.names():
            np.testing.assert_array_equal(first.store[name].data, second.store[name].data)
        other = build_model(small_config, seed=5)
        assert not np.array_equal(other.store["embed.species"].data, first.store["embed.species"].data)

    def test_parameter_order(self, small_config):
        groups = list(build_model(small_config).store.group_counts(depth=1))
        assert groups == ["embed", "rme", "niu", "readout"]

    def test_niu_overhead_over_ea(self):
        niu = build_model(ModelConfig(interaction="niu"))
        ea = build_model(ModelConfig(interaction="ea"))
        assert niu.parameter_count() - ea.parameter_count() == 137

    def test_tied_lighter_than_stacked(self):
        tied = build_model(ModelConfig(interaction="ea", n_interactions=1, n_iterations=3))
        stacked = build_model(ModelConfig(interaction="ea", n_interactions=3, n_iterations=1))
        assert stacked.parameter_count("ea") == 3 * tied.parameter_count("ea")

    def test_cfc_heavier_than_ea(self):
        ea = build_model(ModelConfig(interaction="ea"))
        cfc = build_model(ModelConfig(interaction="cfc"))
        assert cfc.parameter_count("cfc") > ea.parameter_count("ea")

    @pytest.mark.parametrize("interaction, ffn_name", [
        ("niu", "niu.0.ea.ffn.w1"), ("ea", "ea.0.ffn.w1"), ("cfc", "cfc.0.ffn.w1"),
    ])
    def test_ffn_factor_sets_hidden_width(self, interaction, ffn_name):
        config = ModelConfig(dim_node=8, dim_edge=8, n_heads=2, interaction=interaction, use_ffn=True, ffn_factor=3)
        store = build_model(config).store
        assert store["rme.0.ffn.w1"].shape == (8, 24)
        assert store[ffn_name].shape == (8, 24)
        assert store[ffn_name.replace("w1", "w2")].shape == (24, 8)

    def test_invalid_ffn_factor(self):
        with pytest.raises(ConfigError):
            build_model(ModelConfig(ffn_factor=0))

    def test_ponder_weight_carried_by_niu(self):
        assert build_model(ModelConfig(interaction="niu", ponder_weight=0.02)).ponder_weight == 0.02
        assert build_model(ModelConfig(interaction="ea", ponder_weight=0.02)).ponder_weight == 0.0


class TestForward:
    """Tests de la passe avant complète."""

    @pytest.mark.parametrize("interaction", ["niu", "ea", "cfc"])
    def test_shapes_and_steps(self, small_graph, small_config, interaction):
        small_config.interaction = interaction
        result = molct_forward(small_graph, build_model(small_config))
        assert result.n_out.shape == (4, 8)
        assert len(result.steps) == 1
        assert result.steps[0].shape == (4,)
        assert np.all((result.steps[0] >= 1) & (result.steps[0] <= 2))
        if interaction != "niu":
            assert result.mean_steps == 2.0
            assert result.ponder_cost.item() == 0.0

    def test_attention_maps(self, small_graph, small_config):
        small_config.interaction = "ea"
        result = molct_forward(small_graph, build_model(small_config), return_weights=True)
        assert [(label, step) for label, step, _ in result.attention] == [("ea.0", 1), ("ea.0", 2)]
        assert result.attention[0][2].shape == (4, 4)

    def test_without_rme(self, small_graph, small_config):
        small_config.n_rme_blocks = 0
        result = molct_forward(small_graph, build_model(small_config))
        np.testing.assert_array_equal(result.n_rme.data, result.z.data)

    def test_artificial_atom_types(self):
        template, ff = toy_mm_template()
        samples = gen_toy_mm_dataset(template, ff, n_samples=2)
        species_map = build_species_map(samples)
        model = build_model(ModelConfig(dim_node=8, dim_edge=8, n_heads=2, species_vocab_size=len(species_map)))
        model.species_map = species_map
        result = molct_forward(samples[0].graph, model)
        assert result.n_out.shape == (6, 8)
        # Les deux carbones reçoivent des plongements distincts
        assert not np.allclose(result.z.data[0], result.z.data[4])

    def test_unknown_species(self, small_graph, small_config):
        small_config.species_vocab_size = 1
        with pytest.raises(VocabularyError):
            molct_forward(small_graph, build_model(small_config))


class TestModelFile:
    """Tests de la sauvegarde et du rechargement."""

    def test_round_trip_is_bitwise(self, tmp_path, small_graph, small_config):
        model = build_model(small_config, seed=2)
        model.standardizer = Standardizer(energy_mean=-12.5, force_scale=0.75)
        path = save_model(tmp_path / "m.npz", model, RunConfig(toymm=True), seed=2)
        loaded = load_model(path)
        for name in model.store.names():
            np.testing.assert_array_equal(loaded.store[name].data, model.store[name].data)
        assert loaded.standardizer == model.standardizer
        assert loaded.config == model.config
        before = predict_energy_forces(small_graph, model)
        after = predict_energy_forces(small_graph, loaded)
        assert after.total_energy.item() == before.total_energy.item()
        np.testing.assert_array_equal(after.forces.data, before.forces.data)

    def test_metadata(self, tmp_path, small_config):
        model = build_model(small_config)
        model.species_map = {"6|1:0": 0, "1|6:0": 1}
        save_model(tmp_path / "m.npz", model, RunConfig(toymm=True), seed=7)
        content = read_model_file(tmp_path / "m.npz")
        assert content.format == MODEL_FILE_FORMAT
        assert content.seed == 7
        assert content.species_map == model.species_map
        assert content.run_config["toymm"] is True
        assert load_model(tmp_path / "m.npz").species_map == model.species_map

    def test_unknown_format(self, tmp_path):
        path = tmp_path / "other.npz"
        np.savez(path, meta=np.array(yaml.safe_dump({"format": "autre/9"})))
        with pytest.raises(ParseError):
            read_model_file(path)

    def test_not_an_archive(self, tmp_path):
        path = tmp_path / "text.npz"
        path.write_text("pas une archive")
        with pytest.raises(ParseError):
            read_model_file(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            load_model(tmp_path / "absent.npz")
