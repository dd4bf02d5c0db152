"""
Vérification des gradients par différences finies centrées.

Trois suites sur un petit graphe aléatoire :
- forces du modèle contre −∂E/∂x numérique (premier ordre, coordonnées)
- ∂E/∂θ contre différences finies (premier ordre, paramètres)
- ∂L/∂θ de la perte complète énergie + forces (chemin du second ordre)

Une composante dont la perturbation change un pas d'arrêt des NIU est
ignorée et remplacée par un autre tirage (la fonction n'y est pas dérivable).
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

import autodiff as ad
from config import ModelConfig
from constants import GRADCHECK_TOLERANCES, LOG_EMOJIS, LOG_MESSAGES
from errors import GradcheckFailure
from featurize import MolecularGraph, RelationalEdge, pairwise_distances
from molct import MolCtModel, build_model
from readout import loss, predict_energy_forces

RELATIVE_FLOOR = 1e-3
FD_STEP = 1e-5


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), RELATIVE_FLOOR)


@dataclass
class SuiteReport:
    name: str
    tolerance: float
    worst: float = 0.0
    checked: int = 0
    skipped: int = 0
    worst_entry: str = ""

    @property
    def passed(self) -> bool:
        return self.checked > 0 and self.worst <= self.tolerance


@dataclass
class GradcheckReport:
    suites: List[SuiteReport] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.suites)

    def lines(self) -> List[str]:
        return [
            f"{s.name}: worst_rel_err={s.worst:.3e} tol={s.tolerance:.0e} "
            f"checked={s.checked} skipped={s.skipped} {'PASS' if s.passed else 'FAIL'}"
            for s in self.suites
        ]


def gradcheck_config() -> ModelConfig:
    """Petit modèle complet : RME, une NIU avec FFN, T=2."""
    return ModelConfig(
        dim_node=8, dim_edge=8, n_heads=2, n_rme_blocks=1, interaction="niu",
        n_interactions=1, n_iterations=2, use_ffn=True, r_cut=6.0,
    )


def random_graph(rng: np.random.Generator, n_particles: int = 4, relation_vocab_size: int = 4,
                 min_distance: float = 1.0) -> MolecularGraph:
    """Chaîne liée de `n_particles` atomes (H, C, O) à distances ≥ `min_distance`."""
    species = rng.choice([1, 6, 8], size=n_particles)
    while True:
        coords = rng.uniform(-1.5, 1.5, size=(n_particles, 3))
        distances = pairwise_distances(coords)[~np.eye(n_particles, dtype=bool)]
        if distances.min() >= min_distance:
            break
    edges = [
        RelationalEdge(i, i + 1, int(rng.integers(0, relation_vocab_size)))
        for i in range(n_particles - 1)
    ]
    return MolecularGraph(species, coords, edges)


def _signature(pred) -> Tuple[int, ...]:
    return tuple(int(t) for steps in pred.steps for t in steps)


def _run_suite(name: str, candidates: List[Tuple[str, np.ndarray, tuple, float]],
               evaluate: Callable[[], Tuple[float, Tuple[int, ...]]], baseline: Tuple[int, ...],
               required: int, step: float = FD_STEP) -> SuiteReport:
    """
    Compare chaque valeur analytique à (f(θ+h) − f(θ−h)) / 2h.

    `candidates` : (étiquette, tableau perturbé en place, position, valeur analytique).
    """
    report = SuiteReport(name, GRADCHECK_TOLERANCES[name])
    for label, array, position, analytic in candidates:
        if report.checked >= required:
            break
        original = array[position]
        array[position] = original + step
        upper, upper_sig = evaluate()
        array[position] = original - step
        lower, lower_sig = evaluate()
        array[position] = original
        if upper_sig != baseline or lower_sig != baseline:
            report.skipped += 1
            continue
        error = relative_error(analytic, (upper - lower) / (2.0 * step))
        report.checked += 1
        if error >= report.worst:
            report.worst, report.worst_entry = error, label
    return report


def _parameter_candidates(model: MolCtModel, gradients: List[np.ndarray], rng: np.random.Generator,
                          per_group: int) -> List[Tuple[str, np.ndarray, tuple, float]]:
    """Tirages couvrant chaque groupe de paramètres (embed, rme, interactions, readout), entrelacés."""
    groups = {}
    for (name, tensor), g in zip(model.store.items(), gradients):
        parts = name.split(".")
        group = ".".join(parts[:2]) if parts[0] in ("niu", "ea", "cfc") else parts[0]
        groups.setdefault(group, []).append((name, tensor, g))
    rounds = []
    for members in groups.values():
        picks = []
        for _ in range(per_group * 4):
            name, tensor, g = members[int(rng.integers(len(members)))]
            position = tuple(int(rng.integers(s)) for s in tensor.shape)
            picks.append((f"{name}{list(position)}", tensor.data, position, float(g[position])))
        rounds.append(picks)
    return [pick for batch in zip(*rounds) for pick in batch]


def run_gradcheck(config: Optional[ModelConfig] = None, seed: int = 0, n_parameters: int = 12,
                  logger=None) -> GradcheckReport:
    """Exécute les trois suites et journalise la pire erreur relative de chacune."""
    config = config or gradcheck_config()
    rng = np.random.default_rng(seed)
    model = build_model(config, seed)
    graph = random_graph(rng, relation_vocab_size=config.relation_vocab_size)
    energy_label = float(rng.normal())
    force_labels = rng.normal(size=graph.coords.shape)
    lam = 0.99
    ponder_weight = model.ponder_weight
    params = model.store.tensors()
    report = GradcheckReport()

    # Forces contre différences finies de l'énergie
    pred = predict_energy_forces(graph, model)
    baseline = _signature(pred)
    coords = graph.coords.copy()
    analytic_forces = pred.forces.data

    def energy_at_coords():
        p = predict_energy_forces(graph.with_coords(coords), model)
        return p.total_energy.item(), _signature(p)

    candidates = [
        (f"coords[{i},{c}]", coords, (i, c), -float(analytic_forces[i, c]))
        for i in range(graph.n_particles) for c in range(3)
    ]
    report.suites.append(_run_suite("forces_vs_energy", candidates, energy_at_coords, baseline, len(candidates)))

    # ∂E/∂θ
    def energy_value():
        p = predict_energy_forces(graph, model)
        return p.total_energy.item(), _signature(p)

    per_group = max(1, -(-n_parameters // len(model.store.group_counts(1))))
    energy_grads = [g.data for g in ad.grad(pred.total_energy, params)]
    report.suites.append(_run_suite(
        "param_grad_energy", _parameter_candidates(model, energy_grads, rng, per_group),
        energy_value, baseline, n_parameters,
    ))

    # ∂L/∂θ avec le terme de forces (second ordre)
    def loss_value():
        p = predict_energy_forces(graph, model)
        with ad.no_grad():
            value = loss(p, energy_label, force_labels, lam, ponder_weight).item()
        return value, _signature(p)

    pred2 = predict_energy_forces(graph, model, create_graph=True)
    with ad.enable_grad():
        total = loss(pred2, energy_label, force_labels, lam, ponder_weight)
    loss_grads = [g.data for g in ad.grad(total, params)]
    report.suites.append(_run_suite(
        "param_grad_force_loss", _parameter_candidates(model, loss_grads, rng, per_group),
        loss_value, baseline, n_parameters,
    ))

    if logger:
        for suite in report.suites:
            status = "OK" if suite.passed else "ÉCHEC"
            emoji = LOG_EMOJIS["ok"] if suite.passed else LOG_EMOJIS["fail"]
            logger.info(f"{emoji} " + LOG_MESSAGES["gradcheck_suite"].format(
                suite=suite.name, worst=suite.worst, tolerance=suite.tolerance, status=status))
            logger.debug(f"{LOG_EMOJIS['gradcheck']} {suite.name} : {suite.checked} composantes, "
                         f"{suite.skipped} ignorées, pire={suite.worst_entry}")
    return report


def gradcheck(config: Optional[ModelConfig] = None, seed: int = 0, logger=None) -> GradcheckReport:
    """
    Raises:
        GradcheckFailure: Une suite dépasse sa tolérance
    """
    report = run_gradcheck(config, seed=seed, logger=logger)
    if not report.passed:
        failed = [s.name for s in report.suites if not s.passed]
        raise GradcheckFailure(f"Gradcheck en échec : {', '.join(failed)}")
    return report
