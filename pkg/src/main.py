#!/usr/bin/env python3
"""
Point d'entrée CLI du Molecular CT.

Usage:
    python src/main.py train --config run.cfg [--seed N]
    python src/main.py eval --model runs/model_seed0.npz --data val.xyz [--bonds mol.bonds] [--out preds.csv]
    python src/main.py ablate --config run.cfg --variants cfc-r,cfc-logr
    python src/main.py gradcheck [--config run.cfg]
    python src/main.py featurize --data data.xyz --out features.csv
    python src/main.py param-count --config run.cfg
    python src/main.py gen-toymm --out data/ --seed 0 --samples 2048

Codes de sortie : 0 succès, 1 usage/configuration, 2 données, 3 échec numérique.
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from config import get_settings, load_run_config
from constants import ABLATION_VARIANTS, EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, LOG_EMOJIS, LOG_MESSAGES
from datasets import (
    gen_toy_mm_dataset,
    load_dataset,
    toy_mm_template,
    write_bonds,
    write_extxyz,
    write_force_field,
)
from errors import (
    ConfigError,
    ContractError,
    DegeneracyError,
    DomainError,
    GradcheckFailure,
    MolCTError,
    NonFiniteGradientError,
    NumericFailureError,
    ParseError,
    VocabularyError,
)
from featurize import FeaturizerConfig, featurize
from gradcheck import gradcheck_config, run_gradcheck
from logging_setup import setup_logging
from metrics import write_features_csv, write_predictions_csv
from model_file import read_model_file
from trainer import ablate, evaluate, export_diagnostics, param_count, train


class CliUsageError(Exception):
    """Erreur d'usage détectée par argparse."""


class MolctArgumentParser(argparse.ArgumentParser):
    """ArgumentParser qui lève au lieu de quitter (code 1 géré par `main`)."""

    def error(self, message):
        raise CliUsageError(f"{self.prog}: {message}")


def build_parser() -> MolctArgumentParser:
    parser = MolctArgumentParser(prog="molct", description="Molecular CT : entraînement et évaluation")
    sub = parser.add_subparsers(dest="command", parser_class=MolctArgumentParser)
    sub.required = True

    p = sub.add_parser("train", help="Entraîner un modèle (une passe par seed)")
    p.add_argument("--config", help="Fichier de configuration (YAML ou clé = valeur)")
    p.add_argument("--seed", type=int, help="Entraîner uniquement cette seed")

    p = sub.add_parser("eval", help="Évaluer un modèle sauvegardé")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="Fichier extended-XYZ")
    p.add_argument("--bonds", help="Fichier de liaisons")
    p.add_argument("--out", help="CSV des prédictions par échantillon")
    p.add_argument("--diagnostics", help="CSV des pas d'arrêt et cartes d'attention (premier échantillon)")
    p.add_argument("--t-max", type=int, dest="t_max", help="Plafond d'itérations des NIU en inférence")

    p = sub.add_parser("ablate", help="Comparer des variantes d'architecture")
    p.add_argument("--config")
    p.add_argument("--variants", default=",".join(ABLATION_VARIANTS))

    p = sub.add_parser("gradcheck", help="Vérifier les gradients par différences finies")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("featurize", help="Exporter les caractéristiques d'arêtes")
    p.add_argument("--data", required=True)
    p.add_argument("--bonds")
    p.add_argument("--out", required=True)
    p.add_argument("--config")

    p = sub.add_parser("param-count", help="Compter les paramètres par groupe")
    p.add_argument("--config")

    p = sub.add_parser("gen-toymm", help="Générer le jeu de données toy-MM")
    p.add_argument("--out", required=True, help="Répertoire de sortie")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=2048)
    p.add_argument("--noise", type=float, default=0.05)
    return parser


def cmd_train(args, logger) -> int:
    overrides = {"seeds": [args.seed]} if args.seed is not None else None
    config = load_run_config(args.config, overrides=overrides)
    logger.info(f"{LOG_EMOJIS['config']} " + (
        LOG_MESSAGES["config_loaded_from_file"].format(path=args.config) if args.config
        else LOG_MESSAGES["config_defaults"]))
    runner = train(config, logger=logger)
    summary = runner.collector.summary()
    print(f"final_train_loss_mean={summary['final_train_loss_mean']}")
    print(f"final_val_loss_mean={summary['final_val_loss_mean']}")
    return EXIT_OK


def cmd_eval(args, logger) -> int:
    model_file = read_model_file(args.model)
    model = model_file.to_model()
    dataset = load_dataset(args.data, args.bonds, logger=logger)
    lam = (model_file.run_config or {}).get("loss_lambda", 0.99)
    result = evaluate(model, dataset, lam, model.ponder_weight, threads=get_settings()["threads"], t_max=args.t_max)
    for key, value in result.as_dict().items():
        print(f"{key}={value:.10g}")
    if args.out:
        write_predictions_csv(args.out, result.predictions)
        logger.info(f"{LOG_EMOJIS['save']} Prédictions écrites : {args.out}")
    if args.diagnostics and dataset:
        export_diagnostics(model, dataset[0], args.diagnostics, t_max=args.t_max)
        logger.info(f"{LOG_EMOJIS['save']} Diagnostics écrits : {args.diagnostics}")
    return EXIT_OK


def cmd_ablate(args, logger) -> int:
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    config = load_run_config(args.config)
    rows = ablate(config, variants, logger=logger)
    for row in rows:
        print(f"{row['variant']}: params={row['parameter_count']} "
              f"train={row['train_loss_mean']} val={row['val_loss_mean']}")
    return EXIT_OK


def cmd_gradcheck(args, logger) -> int:
    model_config = load_run_config(args.config, validate=False).model if args.config else gradcheck_config()
    report = run_gradcheck(model_config, seed=args.seed, logger=logger)
    for line in report.lines():
        print(line)
    if not report.passed:
        raise GradcheckFailure("Gradcheck en échec")
    return EXIT_OK


def cmd_featurize(args, logger) -> int:
    model_config = load_run_config(args.config, validate=False).model
    cfg = FeaturizerConfig.from_model_config(model_config)
    samples = load_dataset(args.data, args.bonds, logger=logger)
    rows = []
    for sample in samples:
        features, _ = featurize(sample.graph, cfg)
        n = features.n_particles
        positional = features.positional_matrix()
        distances = features.distance_matrix()
        cutoff = features.cutoff_matrix()
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                row = {
                    "sample_id": sample.sample_id, "i": i, "j": j,
                    "distance": distances[i, j], "cutoff": cutoff[i, j],
                    "relation_type": features.relation_types.get((i, j), -1),
                }
                row.update({f"e_{k}": v for k, v in enumerate(positional[i, j])})
                rows.append(row)
    path = write_features_csv(args.out, rows, cfg.d)
    logger.info(f"{LOG_EMOJIS['save']} Caractéristiques écrites : {path} ({len(rows)} paires)")
    return EXIT_OK


def cmd_param_count(args, logger) -> int:
    model_config = load_run_config(args.config, validate=False).model
    for group, count in param_count(model_config).items():
        print(f"{group}={count}")
    return EXIT_OK


def cmd_gen_toymm(args, logger) -> int:
    template, ff = toy_mm_template()
    samples = gen_toy_mm_dataset(template, ff, args.samples, args.noise, args.seed,
                                 require_witness=True, logger=logger)
    out = Path(args.out)
    write_extxyz(out / "toymm.xyz", samples)
    write_bonds(out / "toymm.bonds", template.relational_edges)
    write_force_field(out / "toymm.ff", ff)
    logger.info(f"{LOG_EMOJIS['save']} Jeu toy-MM écrit dans {out}")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "gradcheck": cmd_gradcheck,
    "featurize": cmd_featurize,
    "param-count": cmd_param_count,
    "gen-toymm": cmd_gen_toymm,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Fonction principale : exécute la sous-commande et retourne le code de sortie."""
    logger = setup_logging()
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args, logger)
    except CliUsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as e:
        logger.error(f"{LOG_EMOJIS['error']} " + LOG_MESSAGES["error_config"].format(error=e))
        return EXIT_USAGE
    except (ParseError, VocabularyError, DegeneracyError, FileNotFoundError) as e:
        logger.error(f"{LOG_EMOJIS['error']} " + LOG_MESSAGES["error_data"].format(error=e))
        return EXIT_DATA
    except (NonFiniteGradientError, NumericFailureError, GradcheckFailure, DomainError) as e:
        logger.error(f"{LOG_EMOJIS['error']} " + LOG_MESSAGES["error_numeric"].format(error=e))
        return EXIT_NUMERIC
    except ContractError as e:
        logger.error(f"{LOG_EMOJIS['error']} " + LOG_MESSAGES["error_contract"].format(error=e))
        return EXIT_DATA
    except MolCTError as e:
        logger.error(f"{LOG_EMOJIS['error']} " + LOG_MESSAGES["error_unexpected"].format(error=e))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
