"""Nearest-neighbor baseline over flattened channel stacks.

A deliberately simple, deep-learning-free classifier so the whole pipeline
(ingest, render, segment, export, score) can be exercised end-to-end on a
desk.  Stacks are resized to a small square per channel, flattened, scaled
to [0, 1], and classified by Laplace-smoothed k-nearest-neighbor votes --
the smoothing keeps logloss finite when every neighbor is wrong.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import read_msit, write_msit
from .errors import EmptyDataset, HeterogeneousChannels, ShapeMismatch
from .evaluation import PredictionMatrix
from .imaging import resize
from .segmentation import ChannelStack

log = logging.getLogger(__name__)

DEFAULT_K = 5
DEFAULT_SIDE = 64
DEFAULT_CLASSES = 9


@dataclass
class KnnModel:
    """Fitted model: per-row uint8 features plus labels and hyperparameters."""

    features: np.ndarray  # (n, channels * side * side) uint8
    labels: np.ndarray  # (n,) int, 1-based classes
    k: int
    side: int
    n_channels: int
    n_classes: int


def _featurize(stack: ChannelStack, side: int) -> np.ndarray:
    planes = [resize(stack.pixels[c], side, side) for c in range(stack.channels)]
    return np.stack(planes).reshape(-1)


def knn_fit(
    stacks: list[ChannelStack],
    labels: list[int],
    k: int = DEFAULT_K,
    side: int = DEFAULT_SIDE,
    n_classes: int = DEFAULT_CLASSES,
) -> KnnModel:
    """Store resized, flattened stacks as the reference rows (no training loss).

    ``k`` is clamped to the number of training rows when necessary.

    Raises:
        EmptyDataset: no stacks, or label count mismatch.
        HeterogeneousChannels: stacks with differing channel counts.
    """
    if not stacks or len(stacks) != len(labels):
        raise EmptyDataset("need at least one labeled stack, with one label per stack")
    channel_counts = {s.channels for s in stacks}
    if len(channel_counts) != 1:
        raise HeterogeneousChannels(f"mixed channel counts: {sorted(channel_counts)}")
    label_arr = np.asarray(labels, dtype=np.int64)
    if np.any(label_arr < 1) or np.any(label_arr > n_classes):
        raise ValueError(f"labels must lie in [1, {n_classes}]")
    if k > len(stacks):
        log.warning("k=%d exceeds %d training rows; clamping", k, len(stacks))
        k = len(stacks)
    if k < 1:
        raise ValueError("k must be >= 1")
    features = np.stack([_featurize(s, side) for s in stacks])
    return KnnModel(
        features=features,
        labels=label_arr,
        k=k,
        side=side,
        n_channels=stacks[0].channels,
        n_classes=n_classes,
    )


def knn_predict_proba(model: KnnModel, stack: ChannelStack) -> np.ndarray:
    """Laplace-smoothed class distribution from the k nearest training rows.

    Distances are Euclidean on [0, 1]-scaled features; equal distances are
    broken by training-row index.  Class ``c`` gets
    ``(votes_c + 1) / (k + n_classes)``, so rows always sum to one and every
    entry stays positive.
    """
    if stack.channels != model.n_channels:
        raise ShapeMismatch(
            f"stack has {stack.channels} channels, model wants {model.n_channels}"
        )
    query = _featurize(stack, model.side).astype(np.float64) / 255.0
    ref = model.features.astype(np.float64) / 255.0
    d2 = ((ref - query) ** 2).sum(axis=1)
    nearest = np.argsort(d2, kind="stable")[: model.k]
    votes = np.bincount(model.labels[nearest] - 1, minlength=model.n_classes)
    return (votes + 1.0) / (model.k + model.n_classes)


def knn_predict_matrix(model: KnnModel, stacks: list[ChannelStack]) -> PredictionMatrix:
    """Predict a batch of stacks into a prediction matrix (input order kept)."""
    rows = np.stack([knn_predict_proba(model, s) for s in stacks])
    return PredictionMatrix([s.sample_id for s in stacks], rows)


def save_knn(model: KnnModel, path: str | Path) -> None:
    """Persist features in an MSIT container plus a JSON sidecar."""
    path = Path(path)
    n, dim = model.features.shape
    write_msit(path, model.features.reshape(1, n, dim))
    sidecar = {
        "k": model.k,
        "side": model.side,
        "n_channels": model.n_channels,
        "n_classes": model.n_classes,
        "labels": model.labels.tolist(),
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, sort_keys=True) + "\n")


def load_knn(path: str | Path) -> KnnModel:
    path = Path(path)
    pixels = read_msit(path)
    meta = json.loads(Path(str(path) + ".json").read_text())
    features = pixels.reshape(pixels.shape[1], pixels.shape[2])
    return KnnModel(
        features=features,
        labels=np.asarray(meta["labels"], dtype=np.int64),
        k=int(meta["k"]),
        side=int(meta["side"]),
        n_channels=int(meta["n_channels"]),
        n_classes=int(meta["n_classes"]),
    )
