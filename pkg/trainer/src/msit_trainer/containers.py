"""File contracts shared with the imaging pipeline: MSIT, manifest, prediction CSV.

These are deliberately reimplemented from the documented formats rather
than imported, so the trainer stays a pure consumer of the wire contracts:
MSIT (21-byte little-endian header ``MSIT``/version/dtype/C/H/W plus a
channel-major uint8 payload), JSONL manifests carrying ``sample_id`` and
``family_label``, and ``Id,Prediction1..M`` CSVs.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import Dataset

MSIT_MAGIC = b"MSIT"
_MSIT_HEADER = struct.Struct("<4sIBIII")


class ChannelMismatch(Exception):
    """Stacks or checkpoints disagree on the channel count."""


def read_msit(path: str | Path) -> np.ndarray:
    """Read an MSIT container into a (channels, height, width) uint8 array."""
    raw = Path(path).read_bytes()
    if len(raw) < _MSIT_HEADER.size:
        raise ValueError(f"{path}: truncated MSIT header")
    magic, version, dtype, c, h, w = _MSIT_HEADER.unpack_from(raw)
    if magic != MSIT_MAGIC or version != 1 or dtype != 1:
        raise ValueError(f"{path}: not a version-1 uint8 MSIT file")
    payload = raw[_MSIT_HEADER.size :]
    if len(payload) != c * h * w:
        raise ValueError(f"{path}: payload length {len(payload)} != {c * h * w}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(c, h, w).copy()


@dataclass(frozen=True)
class ManifestEntry:
    sample_id: str
    family_label: int | None


def read_manifest(path: str | Path) -> list[ManifestEntry]:
    """Read the id/label columns of a JSONL manifest, in file order."""
    entries = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            entries.append(ManifestEntry(obj["sample_id"], obj.get("family_label")))
    return entries


def write_predictions_csv(path: str | Path, ids: list[str], probs: np.ndarray) -> None:
    """Emit the submission-shaped CSV (``Id,Prediction1..M``), one row per id."""
    m = probs.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["Id"] + [f"Prediction{j + 1}" for j in range(m)])
        for sample_id, row in zip(ids, probs):
            writer.writerow([sample_id] + [repr(float(p)) for p in row])


class StackDataset(Dataset):
    """MSIT stacks for a manifest, as [0, 1]-scaled float tensors.

    Labels are returned 0-based for the loss; unlabeled entries yield -1.
    All stacks must agree on (channels, height, width).
    """

    def __init__(self, entries: list[ManifestEntry], stacks_dir: str | Path,
                 require_labels: bool = False):
        self.stacks_dir = Path(stacks_dir)
        self.entries = []
        for entry in entries:
            if require_labels and entry.family_label is None:
                raise ValueError(f"{entry.sample_id}: missing family label")
            if (self.stacks_dir / f"{entry.sample_id}.msit").exists():
                self.entries.append(entry)
        if not self.entries:
            raise ValueError(f"no stacks for the manifest under {stacks_dir}")
        first = read_msit(self.stacks_dir / f"{self.entries[0].sample_id}.msit")
        self.shape = first.shape
        for entry in self.entries[1:]:
            shape = _peek_shape(self.stacks_dir / f"{entry.sample_id}.msit")
            if shape != self.shape:
                raise ChannelMismatch(
                    f"{entry.sample_id}: stack shape {shape} != {self.shape}"
                )

    @property
    def channels(self) -> int:
        return self.shape[0]

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, index: int):
        entry = self.entries[index]
        pixels = read_msit(self.stacks_dir / f"{entry.sample_id}.msit")
        tensor = torch.from_numpy(pixels).float() / 255.0
        label = -1 if entry.family_label is None else entry.family_label - 1
        return tensor, label, entry.sample_id


def _peek_shape(path: Path) -> tuple[int, int, int]:
    with open(path, "rb") as fh:
        header = fh.read(_MSIT_HEADER.size)
    _, _, _, c, h, w = _MSIT_HEADER.unpack(header)
    return (c, h, w)
