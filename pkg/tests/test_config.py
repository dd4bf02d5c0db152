"""Tests pour le module de configuration."""

import os
from unittest.mock import patch

import pytest

from config import ModelConfig, RunConfig, apply_values, get_settings, load_run_config, read_config_file
from errors import ConfigError


class TestGetSettings:
    """Tests pour les paramètres d'environnement."""

    def test_defaults(self, clean_env):
        settings = get_settings()
        assert settings["log_level"] == "INFO"
        assert settings["threads"] == 1
        assert settings["output_dir"] is None
        assert settings["steps"] is None
        assert settings["seeds"] is None

    def test_env_overrides(self, clean_env):
        with patch.dict(os.environ, {
            "LOG_LEVEL": "debug",
            "MOLCT_THREADS": "4",
            "MOLCT_STEPS": "12",
            "MOLCT_LR": "0.01",
            "MOLCT_SEEDS": "3,4",
        }):
            settings = get_settings()
        assert settings["log_level"] == "DEBUG"
        assert settings["threads"] == 4
        assert settings["steps"] == 12
        assert settings["lr"] == 0.01
        assert settings["seeds"] == "3,4"

    def test_invalid_values_fall_back(self, clean_env):
        with patch.dict(os.environ, {"MOLCT_THREADS": "abc", "MOLCT_LR": "x"}):
            settings = get_settings()
        assert settings["threads"] == 1
        assert settings["lr"] is None

    def test_unknown_variable_warns(self, clean_env, capsys):
        with patch.dict(os.environ, {"MOLCT_STEPZ": "3"}):
            get_settings()
        assert "MOLCT_STEPZ" in capsys.readouterr().err


class TestModelConfig:
    """Tests de validation des hyper-paramètres."""

    def test_defaults_are_valid(self):
        assert ModelConfig().validate().ponder_width == 4

    @pytest.mark.parametrize("kwargs", [
        {"dim_node": 30},
        {"interaction": "gru"},
        {"rbf": "cubic"},
        {"r_min": 12.0},
        {"halt_epsilon": 0.7},
        {"n_iterations": 0},
        {"sigma": -1.0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            ModelConfig(**kwargs).validate()

    def test_filter_width(self):
        assert ModelConfig(dim_node=16, n_heads=4).filter_width == 16
        assert ModelConfig(cfc_filters=64).filter_width == 64


class TestRunConfigLoading:
    """Tests du chargement par couches."""

    def test_packaged_defaults(self, clean_env):
        config = load_run_config(validate=False)
        assert config.model.dim_node == 32
        assert config.seeds == [0, 1, 2, 3]
        assert config.loss_lambda == 0.99

    def test_yaml_file(self, clean_env, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("toymm: true\ninteraction: ea\nsteps: 10\nlambda: 0.5\n")
        config = load_run_config(path)
        assert config.toymm is True
        assert config.model.interaction == "ea"
        assert config.steps == 10
        assert config.loss_lambda == 0.5

    def test_flat_file(self, clean_env, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# commentaire\ntoymm = true\nseeds = 5, 6\nsigma = 0.3  # largeur\n\n")
        config = load_run_config(path)
        assert config.seeds == [5, 6]
        assert config.model.sigma == 0.3

    def test_flat_file_without_equals(self, clean_env, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("toymm true\n")
        with pytest.raises(ConfigError, match="run.cfg:1"):
            read_config_file(path)

    def test_priority_order(self, clean_env, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("toymm: true\nsteps: 10\nlr: 0.5\n")
        with patch.dict(os.environ, {"MOLCT_STEPS": "20", "MOLCT_LR": "0.25"}):
            config = load_run_config(path, overrides={"steps": 30, "lr": None})
        assert config.steps == 30
        assert config.lr == 0.25

    def test_env_seeds(self, clean_env):
        with patch.dict(os.environ, {"MOLCT_SEEDS": "7, 8,9"}):
            config = load_run_config(overrides={"toymm": True})
        assert config.seeds == [7, 8, 9]

    def test_unknown_key(self, clean_env, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("stepz: 3\n")
        with pytest.raises(ConfigError, match="stepz"):
            load_run_config(path)

    def test_missing_file(self, clean_env, tmp_path):
        with pytest.raises(ConfigError):
            load_run_config(tmp_path / "absent.yaml")

    def test_no_data_source(self, clean_env):
        with pytest.raises(ConfigError):
            load_run_config()

    def test_missing_data_path(self, clean_env, tmp_path):
        with pytest.raises(ConfigError):
            load_run_config(overrides={"train_data": str(tmp_path / "absent.xyz")})


class TestRunConfigValidation:
    """Tests des invariants du run."""

    @pytest.mark.parametrize("values", [
        {"seeds": []},
        {"loss_lambda": 1.5},
        {"batch_size": 0},
        {"lr": -1.0},
        {"n_train": 0},
    ])
    def test_invalid(self, values):
        config = apply_values(RunConfig(toymm=True), values)
        with pytest.raises(ConfigError):
            config.validate()

    def test_bad_value_type(self):
        with pytest.raises(ConfigError):
            apply_values(RunConfig(), {"steps": "beaucoup"})

    def test_bool_coercion(self):
        config = apply_values(RunConfig(), {"use_ffn": "yes", "toymm": "0"})
        assert config.model.use_ffn is True
        assert config.toymm is False

    def test_flat_dict(self):
        flat = RunConfig().to_flat_dict()
        assert flat["dim_node"] == 32
        assert flat["steps"] == 5000
        assert "model" not in flat
