"""
Entraînement, évaluation et ablations du Molecular CT.

- `train` : Adam par mini-batch sur la perte énergie/forces, une passe par seed,
  courbes CSV par seed, modèle sauvegardé par seed puis agrégat multi-seeds.
- `evaluate` : métriques déterministes sur un jeu complet.
- `ablate` : mêmes données et seeds pour chaque variante, rapport comparatif.
- `param_count` : nombre exact de paramètres par groupe.

Les échantillons d'un batch sont évalués en parallèle (pool de threads borné
par MOLCT_THREADS) ; les gradients sont accumulés dans l'ordre du batch.
"""

import copy
import math
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

import autodiff as ad
from config import ModelConfig, RunConfig, get_settings
from constants import ABLATION_VARIANTS, LOG_EMOJIS, LOG_MESSAGES
from datasets import (
    LabeledSample,
    build_species_map,
    gen_toy_mm_dataset,
    load_dataset,
    split,
    toy_mm_variants,
)
from errors import NumericFailureError, VocabularyError
from logging_setup import run_log, setup_logging
from metrics import (
    TrainMetricsCollector,
    TrainRecord,
    write_ablation_csv,
    write_aggregate_csv,
    write_diagnostics_csv,
    write_loss_terms_csv,
    write_metrics_csv,
    write_predictions_csv,
)
from model_file import save_model
from molct import MolCtModel, build_model
from optim import AdamState, adam_step
from readout import Standardizer, loss, predict_energy_forces


@dataclass
class SampleResult:
    """Perte et gradients d'un échantillon (unités du modèle pour la perte)."""
    loss: float
    terms: Dict[str, float]
    grads: List[np.ndarray]
    energy_error: float
    force_abs_errors: np.ndarray
    mean_steps: float


@dataclass
class EvaluationResult:
    n_samples: int
    loss: float
    energy_mae: float
    force_mae: float
    mean_ponder_steps: float
    force_mse: float
    predictions: List[Dict[str, float]] = field(default_factory=list)

    def as_dict(self) -> Dict[str, float]:
        return {
            "loss": self.loss,
            "energy_mae": self.energy_mae,
            "force_mae": self.force_mae,
            "mean_ponder_steps": self.mean_ponder_steps,
        }


def sample_gradients(sample: LabeledSample, model: MolCtModel, lam: float, ponder_weight: float) -> SampleResult:
    """Perte d'un échantillon et gradients exacts (chemin du second ordre compris)."""
    standardizer = model.standardizer
    pred = predict_energy_forces(sample.graph, model, create_graph=True)
    with ad.enable_grad():
        total, terms = loss(
            pred,
            standardizer.energy_to_model(sample.energy),
            standardizer.forces_to_model(sample.forces),
            lam,
            ponder_weight,
            return_terms=True,
        )
    grads = ad.grad(total, model.store.tensors())
    energy_pred, _, forces_pred = pred.physical(standardizer)
    return SampleResult(
        loss=total.item(),
        terms=terms,
        grads=[g.data for g in grads],
        energy_error=abs(energy_pred - sample.energy),
        force_abs_errors=np.abs(forces_pred - sample.forces).reshape(-1),
        mean_steps=pred.mean_steps,
    )


def _map_ordered(function, items: Sequence, threads: int) -> List:
    if threads <= 1 or len(items) <= 1:
        return [function(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(function, items))


def evaluate(model: MolCtModel, dataset: Sequence[LabeledSample], lam: float = 0.99, ponder_weight: float = 0.0,
             threads: int = 1, t_max: Optional[int] = None) -> EvaluationResult:
    """
    Métriques sur tout le jeu : perte moyenne (unités du modèle), MAE énergie et forces
    (unités du jeu), nombre moyen de pas de pondération.

    Raises:
        VocabularyError: Espèce absente du vocabulaire entraîné
    """
    standardizer = model.standardizer

    def run(sample: LabeledSample):
        pred = predict_energy_forces(sample.graph, model, t_max=t_max)
        with ad.no_grad():
            value = loss(
                pred,
                standardizer.energy_to_model(sample.energy),
                standardizer.forces_to_model(sample.forces),
                lam,
                ponder_weight,
            ).item()
        energy_pred, _, forces_pred = pred.physical(standardizer)
        return sample, value, energy_pred, forces_pred, pred.forces.data, pred.mean_steps

    outputs = _map_ordered(run, list(dataset), threads)
    if not outputs:
        return EvaluationResult(0, float("nan"), float("nan"), float("nan"), float("nan"), float("nan"))

    losses, energy_errors, force_errors, squared, steps, predictions = [], [], [], [], [], []
    for sample, value, energy_pred, forces_pred, forces_model, mean_steps in outputs:
        losses.append(value)
        energy_errors.append(abs(energy_pred - sample.energy))
        force_errors.append(np.abs(forces_pred - sample.forces).reshape(-1))
        squared.append(((forces_model - standardizer.forces_to_model(sample.forces)) ** 2).reshape(-1))
        steps.append(mean_steps)
        predictions.append({
            "sample_id": sample.sample_id,
            "E_pred": energy_pred,
            "E_label": sample.energy,
            "force_error_norm": float(np.linalg.norm(forces_pred - sample.forces, axis=1).mean()),
        })
    return EvaluationResult(
        n_samples=len(outputs),
        loss=float(np.mean(losses)),
        energy_mae=float(np.mean(energy_errors)),
        force_mae=float(np.mean(np.concatenate(force_errors))),
        mean_ponder_steps=float(np.mean(steps)),
        force_mse=float(np.mean(np.concatenate(squared))),
        predictions=predictions,
    )


def param_count(config: ModelConfig) -> Dict[str, int]:
    """Comptes exacts par groupe (`embed`, `rme`, chaque interaction, `readout`) + `total`."""
    store = build_model(copy.deepcopy(config), seed=0).store
    counts: "OrderedDict[str, int]" = OrderedDict()
    for name, tensor in store.items():
        parts = name.split(".")
        group = ".".join(parts[:2]) if parts[0] in ("niu", "ea", "cfc") else parts[0]
        counts[group] = counts.get(group, 0) + int(tensor.data.size)
    counts["total"] = store.count()
    return counts


def prepare_data(config: RunConfig, logger=None) -> Tuple[List[LabeledSample], List[LabeledSample]]:
    """Charge (ou génère) les données puis découpe train/validation."""
    if config.toymm:
        (template, ff), *alternatives = toy_mm_variants()[:config.toymm_topologies]
        dataset = gen_toy_mm_dataset(template, ff, config.toymm_samples, config.toymm_noise,
                                     config.toymm_seed, r_min=config.model.r_min,
                                     require_witness=True, logger=logger, alternatives=alternatives)
    else:
        dataset = load_dataset(config.train_data, config.bonds, logger=logger)
    if config.val_data:
        val_pool = load_dataset(config.val_data, config.bonds, logger=logger)
        train_set, _ = split(dataset, config.n_train, 0, config.split_seed)
        val_set, _ = split(val_pool, min(config.n_val, len(val_pool)), 0, config.split_seed)
    else:
        train_set, val_set = split(dataset, config.n_train, config.n_val, config.split_seed)
    if logger:
        logger.info(f"{LOG_EMOJIS['list']} " + LOG_MESSAGES["split_done"].format(
            n_train=len(train_set), n_val=len(val_set), seed=config.split_seed))
    return train_set, val_set


class TrainingRunner:
    """Boucle d'entraînement multi-seeds sur un découpage train/validation fixe."""

    def __init__(self, config: RunConfig, logger=None, collector: Optional[TrainMetricsCollector] = None,
                 data: Optional[Tuple[List[LabeledSample], List[LabeledSample]]] = None,
                 output_dir: Optional[str] = None):
        self.config = config
        self.logger = logger or setup_logging()
        self.collector = collector or TrainMetricsCollector()
        self.threads = get_settings()["threads"]
        self.output_dir = Path(output_dir or config.output_dir)
        self.train_set, self.val_set = data if data is not None else prepare_data(config, self.logger)
        self.species_map = build_species_map(self.train_set) if config.model.artificial_atom_types else None
        self.models: Dict[int, MolCtModel] = {}

    def model_config(self) -> ModelConfig:
        model_config = copy.deepcopy(self.config.model)
        if self.species_map is not None:
            model_config.species_vocab_size = max(model_config.species_vocab_size, len(self.species_map))
        return model_config

    def new_model(self, seed: int) -> MolCtModel:
        model = build_model(self.model_config(), seed)
        model.species_map = self.species_map
        model.standardizer = Standardizer.fit(self.train_set)
        return model

    def _evaluate_splits(self, seed: int, step: int, model: MolCtModel):
        for split_name, dataset in (("train", self.train_set), ("val", self.val_set)):
            if not dataset:
                continue
            result = evaluate(model, dataset, self.config.loss_lambda, model.ponder_weight, self.threads)
            self.collector.record(TrainRecord(seed, step, split_name, **result.as_dict()))
            self.logger.info(f"{LOG_EMOJIS['eval']} " + LOG_MESSAGES["step_metrics"].format(
                seed=seed, step=step, split=split_name, loss=result.loss, energy_mae=result.energy_mae,
                force_mae=result.force_mae, steps=result.mean_ponder_steps))

    def train_seed(self, seed: int) -> MolCtModel:
        """
        Entraîne un modèle pour une seed.

        Raises:
            NumericFailureError: Perte non finie (seed + dernier batch)
        """
        config = self.config
        model = self.new_model(seed)
        ponder_weight = model.ponder_weight
        names = model.store.names()
        params = dict(model.store.items())
        state = AdamState(lr=config.lr, beta1=config.beta1, beta2=config.beta2, epsilon=config.epsilon)
        rng = np.random.default_rng(seed)
        batch_size = min(config.batch_size, len(self.train_set))
        self.logger.info(f"{LOG_EMOJIS['train']} " + LOG_MESSAGES["seed_start"].format(
            seed=seed, steps=config.steps, batch=batch_size, lr=config.lr))

        self._evaluate_splits(seed, 0, model)
        for step in range(1, config.steps + 1):
            batch = [self.train_set[int(i)] for i in rng.choice(len(self.train_set), batch_size, replace=False)]
            results = _map_ordered(
                lambda sample: sample_gradients(sample, model, config.loss_lambda, ponder_weight),
                batch, self.threads,
            )
            batch_loss = sum(r.loss for r in results) / len(results)
            if not math.isfinite(batch_loss):
                self.logger.error(f"{LOG_EMOJIS['fail']} " + LOG_MESSAGES["nan_loss"].format(seed=seed, batch=step))
                raise NumericFailureError(seed, step)

            grads = {name: np.zeros(params[name].shape) for name in names}
            for r in results:
                for name, g in zip(names, r.grads):
                    grads[name] += g
            for name in names:
                grads[name] /= len(results)
            adam_step(params, grads, state)

            self.collector.record(TrainRecord(
                seed, step, "batch", batch_loss,
                energy_mae=float(np.mean([r.energy_error for r in results])),
                force_mae=float(np.mean(np.concatenate([r.force_abs_errors for r in results]))),
                mean_ponder_steps=float(np.mean([r.mean_steps for r in results])),
                energy_term=float(np.mean([r.terms["energy"] for r in results])),
                force_term=float(np.mean([r.terms["force"] for r in results])),
                ponder_term=float(np.mean([r.terms["ponder"] for r in results])),
            ))
            if step % config.eval_every == 0 or step == config.steps:
                self._evaluate_splits(seed, step, model)

        self.models[seed] = model
        return model

    def write_seed_outputs(self, seed: int, model: MolCtModel):
        out = self.output_dir
        metrics_path = write_metrics_csv(
            out / f"metrics_seed{seed}.csv",
            [r for r in self.collector.records(seed) if r.split in ("train", "val")],
        )
        write_loss_terms_csv(out / f"loss_terms_seed{seed}.csv", self.collector.records(seed, "batch"))
        save_model(out / f"model_seed{seed}.npz", model, self.config, seed, self.logger)
        self.logger.info(f"{LOG_EMOJIS['save']} " + LOG_MESSAGES["metrics_written"].format(path=metrics_path))

    def run(self, seeds: Optional[Sequence[int]] = None) -> TrainMetricsCollector:
        seeds = list(seeds if seeds is not None else self.config.seeds)
        with run_log(self.output_dir):
            for seed in seeds:
                model = self.train_seed(seed)
                self.write_seed_outputs(seed, model)
                final = self.collector.final(seed, "val") or self.collector.final(seed, "train")
                self.logger.info(f"{LOG_EMOJIS['ok']} " + LOG_MESSAGES["seed_done"].format(
                    seed=seed, val_loss=final.loss if final else float("nan")))
            path = write_aggregate_csv(self.output_dir / "metrics_aggregate.csv", self.collector)
            self.logger.info(f"{LOG_EMOJIS['metrics']} " + LOG_MESSAGES["aggregate_written"].format(path=path))
        return self.collector


def train(config: RunConfig, logger=None, seeds: Optional[Sequence[int]] = None) -> TrainingRunner:
    """Entraîne toutes les seeds et écrit les sorties ; retourne le runner (modèles + métriques)."""
    runner = TrainingRunner(config, logger=logger)
    runner.run(seeds)
    return runner


# =============================================================================
# ABLATIONS
# =============================================================================

def variant_config(config: RunConfig, variant: str) -> RunConfig:
    """
    Configuration d'une variante d'ablation.

    Raises:
        VocabularyError: Variante inconnue (la liste des noms valides est fournie)
    """
    if variant not in ABLATION_VARIANTS:
        raise VocabularyError(f"Variante inconnue '{variant}'. Variantes valides : {', '.join(ABLATION_VARIANTS)}")
    derived = copy.deepcopy(config)
    model = derived.model
    if variant in ("cfc-r", "cfc-logr"):
        model.interaction = "cfc"
        model.rbf = "linear" if variant == "cfc-r" else "log"
        model.n_interactions, model.n_iterations = 1, 3
        model.n_rme_blocks = 0
    elif variant == "ea-tied":
        model.interaction = "ea"
        model.n_interactions, model.n_iterations = 1, 3
    elif variant == "ea-stacked":
        model.interaction = "ea"
        model.n_interactions, model.n_iterations = 3, 1
    elif variant == "niu-1":
        model.interaction, model.n_interactions = "niu", 1
    elif variant == "niu-3":
        model.interaction, model.n_interactions = "niu", 3
    elif variant == "rme-on":
        model.n_rme_blocks = max(1, model.n_rme_blocks)
    elif variant == "rme-off":
        model.n_rme_blocks = 0
    else:
        model.n_rme_blocks = 0
        model.artificial_atom_types = True
    derived.output_dir = str(Path(config.output_dir) / variant)
    return derived


def ablate(config: RunConfig, variants: Sequence[str], logger=None) -> List[Dict[str, float]]:
    """
    Entraîne chaque variante sur le même découpage et les mêmes seeds.

    Returns:
        List[Dict]: Une ligne de rapport par variante (paramètres, pertes finales moyennes/écarts-types)
    """
    logger = logger or setup_logging()
    derived = [variant_config(config, v) for v in variants]
    data = prepare_data(config, logger)
    rows = []
    for variant, variant_cfg in zip(variants, derived):
        runner = TrainingRunner(variant_cfg, logger=logger, data=data)
        count = build_model(runner.model_config(), seed=0).store.count()
        logger.info(f"{LOG_EMOJIS['ablation']} " + LOG_MESSAGES["variant_start"].format(variant=variant, count=count))
        collector = runner.run()
        summary = collector.summary()
        train_loss = summary["final_train_loss_mean"]
        val_loss = summary["final_val_loss_mean"]
        rows.append({
            "variant": variant,
            "parameter_count": count,
            "train_loss_mean": train_loss,
            "train_loss_std": summary["final_train_loss_std"],
            "val_loss_mean": val_loss,
            "val_loss_std": summary["final_val_loss_std"],
            "val_over_train": val_loss / train_loss if train_loss and val_loss is not None else float("nan"),
        })
    path = write_ablation_csv(Path(config.output_dir) / "ablation_report.csv", rows)
    logger.info(f"{LOG_EMOJIS['trophy']} " + LOG_MESSAGES["ablation_written"].format(path=path))
    return rows


# =============================================================================
# EXPORTS
# =============================================================================

def export_predictions(model: MolCtModel, dataset: Sequence[LabeledSample], path, lam: float = 0.99,
                       threads: int = 1) -> EvaluationResult:
    result = evaluate(model, dataset, lam, threads=threads)
    write_predictions_csv(path, result.predictions)
    return result


def export_diagnostics(model: MolCtModel, sample: LabeledSample, path, t_max: Optional[int] = None) -> Path:
    """Pas d'arrêt par noeud et dernière ligne d'attention (moyenne des têtes) par interaction."""
    pred = predict_energy_forces(sample.graph, model, t_max=t_max, return_weights=True)
    last_maps: Dict[str, np.ndarray] = {}
    for label, _, alpha in pred.attention:
        last_maps[label] = alpha
    rows = []
    for unit, steps in zip(model.interactions, pred.steps):
        alpha = last_maps.get(unit.label)
        for node, t in enumerate(steps):
            row = " ".join(f"{v:.6g}" for v in alpha[node]) if alpha is not None else ""
            rows.append({"interaction": unit.label, "node": node, "halting_step": int(t), "attention_row": row})
    return write_diagnostics_csv(path, rows)
