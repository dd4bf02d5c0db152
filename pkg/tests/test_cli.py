"""Tests pour l'interface en ligne de commande."""

from dataclasses import replace

import pytest

from constants import EXIT_DATA, EXIT_OK, EXIT_USAGE
from errors import ContractError, DimensionError, MolCTError
from main import build_parser, main
from metrics import read_csv_rows
from model_file import save_model
from molct import build_model
from trainer import evaluate

TINY_RUN = """\
toymm: true
toymm_samples: 12
n_train: 4
n_val: 2
steps: 1
eval_every: 1
batch_size: 2
seeds: [0]
dim_node: 8
dim_edge: 8
n_heads: 2
n_iterations: 2
r_cut: 6.0
"""


@pytest.fixture
def cli_logger(mocker, clean_env):
    """Remplace le logging loguru par un logger factice."""
    logger = mocker.MagicMock()
    mocker.patch("main.setup_logging", return_value=logger)
    return logger


class TestParser:
    """Tests du parseur d'arguments."""

    def test_defaults(self):
        args = build_parser().parse_args(["gen-toymm", "--out", "data"])
        assert (args.seed, args.samples, args.noise) == (0, 2048, 0.05)

    def test_eval_t_max(self):
        args = build_parser().parse_args(["eval", "--model", "m.npz", "--data", "d.xyz", "--t-max", "6"])
        assert args.t_max == 6


class TestExitCodes:
    """Tests des codes de sortie."""

    def test_missing_command(self, cli_logger):
        assert main([]) == EXIT_USAGE

    def test_unknown_option(self, cli_logger):
        assert main(["train", "--bogus"]) == EXIT_USAGE

    def test_missing_config_file(self, cli_logger, tmp_path):
        assert main(["train", "--config", str(tmp_path / "absent.yaml")]) == EXIT_USAGE

    def test_unknown_variant(self, cli_logger, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text(TINY_RUN)
        assert main(["ablate", "--config", str(path), "--variants", "niu-9"]) == EXIT_DATA

    def test_missing_model_file(self, cli_logger, tmp_path):
        assert main(["eval", "--model", str(tmp_path / "m.npz"), "--data", str(tmp_path / "d.xyz")]) == EXIT_DATA

    def test_malformed_data(self, cli_logger, tmp_path, small_config):
        save_model(tmp_path / "m.npz", build_model(small_config))
        data = tmp_path / "bad.xyz"
        data.write_text("2\nenergy=1.0\nH 0 0 0 0 0 0\n")
        assert main(["eval", "--model", str(tmp_path / "m.npz"), "--data", str(data)]) == EXIT_DATA

    @pytest.mark.parametrize("error, expected", [
        (ContractError("mauvaise entrée"), EXIT_DATA),
        (DimensionError("matmul", (2, 3), (4, 1)), EXIT_DATA),
        (MolCTError("inattendue"), EXIT_USAGE),
    ])
    def test_project_errors_map_to_exit_codes(self, cli_logger, mocker, error, expected):
        mocker.patch.dict("main.COMMANDS", {"param-count": mocker.MagicMock(side_effect=error)})
        assert main(["param-count"]) == expected
        cli_logger.error.assert_called_once()
        assert str(error) in cli_logger.error.call_args.args[0]


class TestCommands:
    """Tests de bout en bout des sous-commandes."""

    def test_param_count(self, cli_logger, capsys):
        assert main(["param-count"]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].startswith("embed=")
        assert lines[-1].startswith("total=")

    def test_gen_featurize_eval(self, cli_logger, tmp_path, small_config, capsys):
        out = tmp_path / "toy"
        assert main(["gen-toymm", "--out", str(out), "--samples", "3", "--seed", "1"]) == EXIT_OK
        for name in ("toymm.xyz", "toymm.bonds", "toymm.ff"):
            assert (out / name).exists()

        features = tmp_path / "features.csv"
        assert main(["featurize", "--data", str(out / "toymm.xyz"), "--bonds", str(out / "toymm.bonds"),
                     "--out", str(features)]) == EXIT_OK
        rows = read_csv_rows(features)
        assert len(rows) == 3 * 6 * 5
        assert {r["relation_type"] for r in rows} == {"-1", "0", "1"}

        save_model(tmp_path / "m.npz", build_model(small_config))
        preds = tmp_path / "preds.csv"
        diagnostics = tmp_path / "diag.csv"
        assert main(["eval", "--model", str(tmp_path / "m.npz"), "--data", str(out / "toymm.xyz"),
                     "--bonds", str(out / "toymm.bonds"), "--out", str(preds),
                     "--diagnostics", str(diagnostics), "--t-max", "4"]) == EXIT_OK
        assert "energy_mae=" in capsys.readouterr().out
        assert len(read_csv_rows(preds)) == 3
        assert len(read_csv_rows(diagnostics)) == 6

    def test_eval_uses_training_ponder_weight(self, cli_logger, tmp_path, small_config, mocker):
        """La perte affichée par eval inclut le même terme de pondération que l'entraînement."""
        out = tmp_path / "toy"
        assert main(["gen-toymm", "--out", str(out), "--samples", "2", "--seed", "3"]) == EXIT_OK
        save_model(tmp_path / "m.npz", build_model(replace(small_config, ponder_weight=0.05)))
        spy = mocker.patch("main.evaluate", wraps=evaluate)
        assert main(["eval", "--model", str(tmp_path / "m.npz"), "--data", str(out / "toymm.xyz"),
                     "--bonds", str(out / "toymm.bonds")]) == EXIT_OK
        assert spy.call_args.args[3] == pytest.approx(0.05)

    def test_train(self, cli_logger, tmp_path, capsys):
        path = tmp_path / "run.yaml"
        path.write_text(TINY_RUN + f"output_dir: {tmp_path / 'runs'}\n")
        assert main(["train", "--config", str(path), "--seed", "5"]) == EXIT_OK
        assert (tmp_path / "runs" / "metrics_seed5.csv").exists()
        assert (tmp_path / "runs" / "model_seed5.npz").exists()
        assert (tmp_path / "runs" / "run.log").exists()
        assert "final_val_loss_mean=" in capsys.readouterr().out

    def test_gradcheck(self, cli_logger, capsys):
        assert main(["gradcheck"]) == EXIT_OK
        out = capsys.readouterr().out
        assert out.count("PASS") == 3
