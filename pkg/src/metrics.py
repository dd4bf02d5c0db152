"""Module de métriques d'entraînement : collecte thread-safe et exports CSV."""

import csv
import statistics
import threading
from collections import defaultdict
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from constants import (
    ABLATION_CSV_COLUMNS,
    AGGREGATE_CSV_COLUMNS,
    AGGREGATE_METRICS,
    DIAGNOSTICS_CSV_COLUMNS,
    FEATURES_CSV_COLUMNS,
    LOSS_TERMS_CSV_COLUMNS,
    METRICS_CSV_COLUMNS,
    PREDICTIONS_CSV_COLUMNS,
)


@dataclass
class TrainRecord:
    """Une ligne de courbe d'apprentissage (pas, split, perte et sa décomposition)."""
    seed: int
    step: int
    split: str
    loss: float
    energy_mae: float
    force_mae: float
    mean_ponder_steps: float
    energy_term: float = 0.0
    force_term: float = 0.0
    ponder_term: float = 0.0


class TrainMetricsCollector:
    """Collecteur thread-safe des `TrainRecord` de toutes les seeds."""

    def __init__(self):
        self._records: List[TrainRecord] = []
        self._lock = threading.Lock()

    def record(self, record: TrainRecord):
        """Enregistre une ligne."""
        with self._lock:
            self._records.append(record)

    def records(self, seed: Optional[int] = None, split: Optional[str] = None) -> List[TrainRecord]:
        with self._lock:
            return [
                r for r in self._records
                if (seed is None or r.seed == seed) and (split is None or r.split == split)
            ]

    def seeds(self) -> List[int]:
        with self._lock:
            return sorted({r.seed for r in self._records})

    def final(self, seed: int, split: str) -> Optional[TrainRecord]:
        """Dernière ligne (pas maximal) d'une seed pour un split."""
        rows = self.records(seed, split)
        return max(rows, key=lambda r: r.step) if rows else None

    def aggregate(self) -> List[Dict[str, Any]]:
        """Moyenne et écart-type (population) par (pas, split) sur les seeds."""
        groups: Dict[tuple, List[TrainRecord]] = defaultdict(list)
        for r in self.records():
            groups[(r.step, r.split)].append(r)
        rows = []
        for (step, split), members in sorted(groups.items()):
            row: Dict[str, Any] = {"step": step, "split": split, "n_seeds": len(members)}
            for metric in AGGREGATE_METRICS:
                values = [getattr(r, metric) for r in members]
                row[f"{metric}_mean"] = statistics.fmean(values)
                row[f"{metric}_std"] = statistics.pstdev(values) if len(values) > 1 else 0.0
            rows.append(row)
        return rows

    def summary(self) -> Dict[str, Any]:
        """Résumé : nombre de lignes, seeds, pertes finales moyennes par split."""
        seeds = self.seeds()
        result: Dict[str, Any] = {"records": len(self.records()), "seeds": seeds}
        for split in ("train", "val"):
            finals = [self.final(seed, split) for seed in seeds]
            losses = [r.loss for r in finals if r is not None]
            result[f"final_{split}_loss_mean"] = statistics.fmean(losses) if losses else None
            result[f"final_{split}_loss_std"] = statistics.pstdev(losses) if len(losses) > 1 else 0.0
        return result

    def reset(self):
        """Remet à zéro toutes les métriques."""
        with self._lock:
            self._records = []


# =============================================================================
# EXPORTS CSV
# =============================================================================

def _write_rows(path, columns: Sequence[str], rows: Iterable[Dict[str, Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(columns), extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _format(v) for k, v in row.items()})
    return path


def _format(value):
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.10g}"
    return value


def write_metrics_csv(path, records: Sequence[TrainRecord]) -> Path:
    """Colonnes : step,split,loss,energy_mae,force_mae,mean_ponder_steps."""
    return _write_rows(path, METRICS_CSV_COLUMNS, (asdict(r) for r in records))


def write_loss_terms_csv(path, records: Sequence[TrainRecord]) -> Path:
    return _write_rows(path, LOSS_TERMS_CSV_COLUMNS, (asdict(r) for r in records))


def write_aggregate_csv(path, collector: TrainMetricsCollector) -> Path:
    return _write_rows(path, AGGREGATE_CSV_COLUMNS, collector.aggregate())


def write_ablation_csv(path, rows: Sequence[Dict[str, Any]]) -> Path:
    return _write_rows(path, ABLATION_CSV_COLUMNS, rows)


def write_predictions_csv(path, rows: Sequence[Dict[str, Any]]) -> Path:
    """Colonnes : sample_id,E_pred,E_label,force_error_norm (norme moyenne par atome)."""
    return _write_rows(path, PREDICTIONS_CSV_COLUMNS, rows)


def write_diagnostics_csv(path, rows: Sequence[Dict[str, Any]]) -> Path:
    """Colonnes : interaction,node,halting_step,attention_row (coefficients séparés par des espaces)."""
    return _write_rows(path, DIAGNOSTICS_CSV_COLUMNS, rows)


def write_features_csv(path, rows: Sequence[Dict[str, Any]], dim_edge: int) -> Path:
    columns = FEATURES_CSV_COLUMNS + [f"e_{k}" for k in range(dim_edge)]
    return _write_rows(path, columns, rows)


def read_csv_rows(path) -> List[Dict[str, str]]:
    with open(path, "r", newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))
