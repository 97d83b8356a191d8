"""Multi-class logloss, accuracy and confusion scoring of prediction files.

The score is ``-(1/N) * sum_i ln p[i, y_i]`` over renormalized rows, with
every probability clipped to [1e-15, 1 - 1e-15] before the log -- the
scoring-server convention for this metric, which keeps a confidently wrong
prediction finite at -ln(1e-15) ~ 34.54.  Ids must align exactly between
predictions and labels; nothing is realigned silently.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, IdMismatch

PROB_CLIP = 1e-15


@dataclass
class PredictionMatrix:
    """Per-sample probability rows over the family classes."""

    ids: list[str]
    probs: np.ndarray  # (N, M) float64

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 2 or self.probs.shape[0] != len(self.ids):
            raise DimensionMismatch(
                f"{len(self.ids)} ids but probability shape {self.probs.shape}"
            )


@dataclass
class LabelVector:
    """True family indices (1-based), in the same id order as the predictions."""

    ids: list[str]
    values: np.ndarray  # (N,) int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int64)
        if self.values.ndim != 1 or self.values.shape[0] != len(self.ids):
            raise DimensionMismatch(
                f"{len(self.ids)} ids but label shape {self.values.shape}"
            )


def _check_aligned(preds: PredictionMatrix, labels: LabelVector) -> None:
    if len(preds.ids) != len(labels.ids):
        raise DimensionMismatch(
            f"{len(preds.ids)} predictions vs {len(labels.ids)} labels"
        )
    if preds.ids != labels.ids:
        raise IdMismatch("prediction and label ids differ (not realigning silently)")
    m = preds.probs.shape[1]
    if np.any(labels.values < 1) or np.any(labels.values > m):
        raise DimensionMismatch(f"labels outside [1, {m}]")


def _renormalized(probs: np.ndarray) -> np.ndarray:
    if np.any(probs < 0):
        raise ValueError("negative probabilities")
    sums = probs.sum(axis=1)
    if np.any(sums <= 0):
        raise ValueError("a probability row sums to zero")
    return probs / sums[:, None]


def logloss(preds: PredictionMatrix, labels: LabelVector) -> float:
    """Mean negative log of the true-class probability (renormalize, clip, log)."""
    _check_aligned(preds, labels)
    probs = _renormalized(preds.probs)
    probs = np.clip(probs, PROB_CLIP, 1.0 - PROB_CLIP)
    picked = probs[np.arange(len(labels.ids)), labels.values - 1]
    return float(-np.mean(np.log(picked)))


def accuracy(preds: PredictionMatrix, labels: LabelVector) -> float:
    """Fraction of rows whose argmax (ties to the lowest class index) is correct."""
    _check_aligned(preds, labels)
    predicted = np.argmax(preds.probs, axis=1) + 1
    return float(np.mean(predicted == labels.values))


def confusion(preds: PredictionMatrix, labels: LabelVector) -> np.ndarray:
    """M x M count matrix: rows are true classes, columns predicted classes."""
    _check_aligned(preds, labels)
    m = preds.probs.shape[1]
    predicted = np.argmax(preds.probs, axis=1)
    counts = np.zeros((m, m), dtype=np.int64)
    np.add.at(counts, (labels.values - 1, predicted), 1)
    return counts


def labels_for(preds: PredictionMatrix, label_map: dict[str, int]) -> LabelVector:
    """Arrange a label dict into the prediction matrix's id order (explicit join)."""
    missing = [i for i in preds.ids if i not in label_map]
    if missing:
        raise IdMismatch(f"no label for ids: {missing[:5]}{'...' if len(missing) > 5 else ''}")
    return LabelVector(list(preds.ids), np.array([label_map[i] for i in preds.ids]))


def write_predictions_csv(path: str | Path, preds: PredictionMatrix) -> None:
    """Write the submission-shaped CSV: ``Id,Prediction1,...,PredictionM``."""
    m = preds.probs.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["Id"] + [f"Prediction{j + 1}" for j in range(m)])
        for sample_id, row in zip(preds.ids, preds.probs):
            writer.writerow([sample_id] + [repr(float(p)) for p in row])


def load_predictions_csv(path: str | Path) -> PredictionMatrix:
    """Load a prediction CSV, validating the header and renormalizing rows."""
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip().lower() != "id":
            raise ValueError(f"{path}: expected an Id,Prediction1..M header")
        m = len(header) - 1
        expected = [f"prediction{j + 1}" for j in range(m)]
        if [c.strip().lower() for c in header[1:]] != expected or m < 1:
            raise ValueError(f"{path}: malformed prediction header {header!r}")
        ids: list[str] = []
        rows: list[list[float]] = []
        for row in reader:
            if not row:
                continue
            if len(row) != m + 1:
                raise ValueError(f"{path}: row for {row[0]!r} has {len(row) - 1} values, want {m}")
            ids.append(row[0].strip())
            rows.append([float(v) for v in row[1:]])
    probs = _renormalized(np.array(rows, dtype=np.float64).reshape(len(ids), m))
    return PredictionMatrix(ids, probs)
