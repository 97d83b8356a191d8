"""Helpers: write MSIT stacks and manifests per the documented wire formats."""

import json
import struct
from pathlib import Path

import numpy as np

_HEADER = struct.Struct("<4sIBIII")


def write_msit(path: Path, pixels: np.ndarray) -> None:
    c, h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(b"MSIT", 1, 1, c, h, w))
        fh.write(np.ascontiguousarray(pixels, dtype=np.uint8).tobytes())


def write_manifest(path: Path, entries: list[dict]) -> None:
    path.write_text("\n".join(json.dumps(e) for e in entries) + "\n")


def write_labels_csv(path: Path, labels: dict[str, int]) -> None:
    rows = ["Id,Class"] + [f"{k},{v}" for k, v in sorted(labels.items())]
    path.write_text("\n".join(rows) + "\n")


def nine_family_corpus(
    root: Path,
    per_family: int = 10,
    channels: int = 3,
    side: int = 64,
    seed: int = 99,
) -> tuple[Path, Path, dict[str, int]]:
    """Nine families with distinct stripe textures; returns (stacks_dir, manifest, labels).

    Textured (not constant) images: constant inputs are adversarial for
    batch-norm nets, whose fixed-statistics inference then cannot reproduce
    the batch-dependent solution the optimizer finds.
    """
    stacks = root / "stacks"
    stacks.mkdir(parents=True, exist_ok=True)
    rng = np.random.RandomState(seed)
    yy, xx = np.mgrid[0:side, 0:side]
    entries, labels = [], {}
    for family in range(1, 10):
        period = 3 + 2 * family
        angle = family * np.pi / 9
        wave = np.sin((xx * np.cos(angle) + yy * np.sin(angle)) * 2 * np.pi / period)
        base = (127 + 100 * wave).astype(np.int32)
        for i in range(per_family):
            sample_id = f"f{family}_{i:02d}"
            pixels = np.stack([base] * channels)
            pixels = pixels + rng.randint(-20, 21, size=pixels.shape)
            write_msit(stacks / f"{sample_id}.msit", pixels.clip(0, 255).astype(np.uint8))
            entries.append({"sample_id": sample_id, "family_label": family})
            labels[sample_id] = family
    manifest = root / "train.jsonl"
    write_manifest(manifest, entries)
    return stacks, manifest, labels
