"""Overhead accounting, model evaluation and the metrics sink."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import model as lr_model
from .errors import EmptyClassError
from .wire import cipher_wire_size

MB = 10 ** 6


def to_mb(n_bytes: int | float) -> float:
    return n_bytes / MB


def comm_overhead(param_count: int, element_size_bytes: int = 56, convention: str = "nominal", *,
                  chunk_dim: int = 16, client_id_bytes: int = 0) -> int:
    """Upload bytes for one client in one round.

    ``nominal``: one group element per parameter.  ``measured``: the exact
    serialized CipherVector (two halves, length prefixes, header); pass the
    wire element size, not the accounting constant.
    """
    if param_count < 1 or element_size_bytes < 1:
        raise ValueError("param_count and element_size_bytes must be positive")
    if convention == "nominal":
        return element_size_bytes * param_count
    if convention == "measured":
        return cipher_wire_size(param_count, chunk_dim, element_size_bytes, client_id_bytes)
    raise ValueError(f"unknown convention {convention!r}")


@dataclass(frozen=True)
class EvalResult:
    confusion: np.ndarray  # row-normalized: rows are true classes
    counts: np.ndarray

    @property
    def per_class_accuracy(self) -> np.ndarray:
        return np.diag(self.confusion).copy()

    @property
    def macro_accuracy(self) -> float:
        return float(np.mean(self.per_class_accuracy))

    @property
    def min_class_accuracy(self) -> float:
        return float(np.min(self.per_class_accuracy))

    @property
    def overall_accuracy(self) -> float:
        return float(np.trace(self.counts) / self.counts.sum())

    @property
    def macro_precision(self) -> float:
        col = self.counts.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            prec = np.where(col > 0, np.diag(self.counts) / col, 0.0)
        return float(np.mean(prec))

    @property
    def macro_recall(self) -> float:
        return self.macro_accuracy


def confusion_from_predictions(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> EvalResult:
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    row = counts.sum(axis=1)
    if np.any(row == 0):
        missing = [int(c) for c in np.flatnonzero(row == 0)]
        raise EmptyClassError(f"test set has no samples for classes {missing}")
    return EvalResult(counts / row[:, None], counts)


def evaluate_model(weights, x: np.ndarray, y: np.ndarray, n_classes: int) -> EvalResult:
    w = getattr(weights, "weights", weights)
    return confusion_from_predictions(np.asarray(y), lr_model.predict(w, x, n_classes), n_classes)


@dataclass
class MetricsRow:
    round_index: int
    participants: list[str]
    per_class_accuracy: list[float]
    macro_accuracy: float
    macro_precision: float
    bytes_nominal: int = 0
    bytes_measured: int = 0
    bytes_measured_formula: int = 0
    broadcast_bytes: int = 0
    encrypt_seconds: float = 0.0
    decrypt_seconds: float = 0.0
    dlog_queries: int = 0
    clamp_count: int = 0
    alpha_sum: float = 0.0
    step_divergence: float = 0.0
    step_tolerance: float = 0.0
    plain_macro_accuracy: float | None = None
    trajectory_divergence: float | None = None
    confusion: list[list[float]] = field(default_factory=list, repr=False)

    @property
    def min_class_accuracy(self) -> float:
        return min(self.per_class_accuracy)

    @property
    def within_tolerance(self) -> bool:
        return self.step_divergence <= self.step_tolerance

    def csv_fields(self) -> dict:
        row = {
            "round": self.round_index,
            "participants": ";".join(self.participants),
            "n_participants": len(self.participants),
            "macro_accuracy": f"{self.macro_accuracy:.6f}",
            "min_class_accuracy": f"{self.min_class_accuracy:.6f}",
            "macro_precision": f"{self.macro_precision:.6f}",
        }
        for c, a in enumerate(self.per_class_accuracy):
            row[f"acc_class_{c}"] = f"{a:.6f}"
        row.update({
            "bytes_nominal": self.bytes_nominal,
            "bytes_measured": self.bytes_measured,
            "bytes_measured_formula": self.bytes_measured_formula,
            "broadcast_bytes": self.broadcast_bytes,
            "encrypt_seconds": f"{self.encrypt_seconds:.6f}",
            "decrypt_seconds": f"{self.decrypt_seconds:.6f}",
            "dlog_queries": self.dlog_queries,
            "clamp_count": self.clamp_count,
            "alpha_sum": f"{self.alpha_sum:.15f}",
            "step_divergence": f"{self.step_divergence:.9g}",
            "step_tolerance": f"{self.step_tolerance:.9g}",
            "within_tolerance": str(self.within_tolerance).lower(),
            "plain_macro_accuracy": "" if self.plain_macro_accuracy is None else f"{self.plain_macro_accuracy:.6f}",
            "trajectory_divergence": "" if self.trajectory_divergence is None else f"{self.trajectory_divergence:.9g}",
        })
        return row


class MetricsSink:
    """Single consumer writing one CSV row per round; UTF-8, LF endings, fixed column order."""

    def __init__(self, path: str | Path, n_classes: int):
        self.path = Path(path)
        self.rows: list[MetricsRow] = []
        dummy = MetricsRow(0, [], [0.0] * n_classes, 0.0, 0.0)
        self.columns = list(dummy.csv_fields())
        self._fh = open(self.path, "w", encoding="utf-8", newline="")
        self._writer = csv.DictWriter(self._fh, fieldnames=self.columns, lineterminator="\n")
        self._writer.writeheader()

    def write(self, row: MetricsRow):
        self.rows.append(row)
        self._writer.writerow(row.csv_fields())
        self._fh.flush()

    def close(self):
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_confusion_sidecar(path: str | Path, rows: Sequence[MetricsRow]):
    data = {"rounds": [{"round": r.round_index, "confusion": r.confusion} for r in rows]}
    Path(path).write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")


def read_metrics_csv(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# -- analytic FLOP counts (not measured) -------------------------------------

def dense_flops(in_features: int, out_features: int) -> int:
    return 2 * in_features * out_features


def conv2d_flops(in_channels: int, out_channels: int, kernel: int, out_h: int, out_w: int) -> int:
    return 2 * in_channels * out_channels * kernel * kernel * out_h * out_w


def logreg_training_flops(n_features: int, n_classes: int, samples: int, epochs: int) -> int:
    """Analytic forward+backward count for softmax regression: ~3 dense passes per sample."""
    per_sample = 3 * dense_flops(n_features + 1, n_classes)
    return per_sample * samples * epochs
