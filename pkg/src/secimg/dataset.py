"""Manifests, stratified splitting, and bit-exact export of channel stacks.

The MSIT container is the package's lossless tensor format: a 21-byte
little-endian header (``MSIT``, version, dtype, channels/height/width) and
a channel-major uint8 payload.  PNG export is a per-channel convenience
view; pixel values stay raw 8-bit -- normalization is the trainer's job.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from PIL import Image

from .binfmt import SectionedBinary, parse_asm_sections, parse_bytes_file, parse_pe
from .errors import (
    DuplicateSampleId,
    EmptyDataset,
    MalformedTensorFile,
    SecimgError,
    UnlabeledSample,
)
from .sectioning import SectionCategory
from .segmentation import ChannelStack

log = logging.getLogger(__name__)

MSIT_MAGIC = b"MSIT"
MSIT_VERSION = 1
MSIT_DTYPE_UINT8 = 1
_MSIT_HEADER = struct.Struct("<4sIBIII")  # magic, version, dtype, C, H, W

# The nine families of the Microsoft Malware Classification Challenge
# training set, with their known sample counts (useful as a corpus check
# when the real dataset is mounted).
BIG2015_FAMILIES = {
    1: "Ramnit",
    2: "Lollipop",
    3: "Kelihos_ver3",
    4: "Vundo",
    5: "Simda",
    6: "Tracur",
    7: "Kelihos_ver1",
    8: "Obfuscator.ACY",
    9: "Gatak",
}
BIG2015_TRAIN_COUNTS = {
    "Ramnit": 1541,
    "Lollipop": 2478,
    "Kelihos_ver3": 2942,
    "Vundo": 475,
    "Simda": 42,
    "Tracur": 751,
    "Kelihos_ver1": 398,
    "Obfuscator.ACY": 1228,
    "Gatak": 1013,
}  # total 10868


class DatasetLayout(str, Enum):
    BIG2015 = "big2015"
    PE_DIR = "pe"


@dataclass
class SampleManifestEntry:
    """One sample's identity, label, source paths and section summary."""

    sample_id: str
    byte_length: int
    family_label: int | None = None
    bytes_path: str | None = None
    asm_path: str | None = None
    pe_path: str | None = None
    section_summary: list[tuple[str, str, int, int]] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "sample_id": self.sample_id,
                "family_label": self.family_label,
                "bytes_path": self.bytes_path,
                "asm_path": self.asm_path,
                "pe_path": self.pe_path,
                "byte_length": self.byte_length,
                "section_summary": [list(s) for s in self.section_summary],
            }
        )

    @classmethod
    def from_json(cls, line: str) -> "SampleManifestEntry":
        obj = json.loads(line)
        return cls(
            sample_id=obj["sample_id"],
            byte_length=obj["byte_length"],
            family_label=obj.get("family_label"),
            bytes_path=obj.get("bytes_path"),
            asm_path=obj.get("asm_path"),
            pe_path=obj.get("pe_path"),
            section_summary=[tuple(s) for s in obj.get("section_summary", [])],
        )


def read_labels_csv(path: str | Path) -> dict[str, int]:
    """Read an ``Id,Class`` label file into a dict (classes are 1-based ints)."""
    labels: dict[str, int] = {}
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip().lower() for c in header[:2]] != ["id", "class"]:
            raise ValueError(f"{path}: expected an Id,Class header, got {header!r}")
        for row in reader:
            if not row:
                continue
            sample_id, cls = row[0].strip(), int(row[1])
            if cls < 1:
                raise ValueError(f"{path}: class for {sample_id!r} must be >= 1")
            labels[sample_id] = cls
    return labels


def write_labels_csv(path: str | Path, labels: dict[str, int]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["Id", "Class"])
        for sample_id in sorted(labels):
            writer.writerow([sample_id, labels[sample_id]])


def build_manifest(
    root_dir: str | Path,
    layout: DatasetLayout,
    labels_csv: str | Path | None = None,
    name_map=None,
) -> list[SampleManifestEntry]:
    """Scan a corpus directory into manifest entries, sorted by sample id.

    BIG2015 layout expects ``<id>.bytes`` + ``<id>.asm`` pairs; a file
    missing its counterpart is reported and skipped.  PE layout takes every
    parseable file.  Per-sample parse failures are skipped with a warning,
    not fatal.  Labels, when given, are joined by id.
    """
    root = Path(root_dir)
    labels = read_labels_csv(labels_csv) if labels_csv else {}
    if layout is DatasetLayout.BIG2015:
        entries = _scan_big2015(root, labels, name_map)
    elif layout is DatasetLayout.PE_DIR:
        entries = _scan_pe_dir(root, labels, name_map)
    else:  # pragma: no cover
        raise ValueError(f"unknown layout {layout!r}")
    if not entries:
        raise EmptyDataset(f"no usable samples under {root}")
    entries.sort(key=lambda e: e.sample_id)
    return entries


def _summarize(bin: SectionedBinary) -> list[tuple[str, str, int, int]]:
    return [(r.name, r.category.name, r.start, r.length) for r in bin.sections]


def _scan_big2015(root: Path, labels: dict[str, int], name_map) -> list[SampleManifestEntry]:
    bytes_files = {p.stem: p for p in root.glob("*.bytes")}
    asm_files = {p.stem: p for p in root.glob("*.asm")}
    for stem in sorted(set(bytes_files) ^ set(asm_files)):
        missing = ".asm" if stem in bytes_files else ".bytes"
        log.warning("%s: missing %s counterpart; skipped", stem, missing)

    entries = []
    for stem in sorted(set(bytes_files) & set(asm_files)):
        try:
            with open(bytes_files[stem], encoding="ascii", errors="replace") as fh:
                buffer = parse_bytes_file(fh)
            if len(buffer) == 0:
                log.warning("%s: empty byte content; skipped", stem)
                continue
            with open(asm_files[stem], encoding="latin-1") as fh:
                bin = parse_asm_sections(fh, buffer, sample_id=stem, name_map=name_map)
        except SecimgError as exc:
            log.warning("%s: %s; skipped", stem, exc)
            continue
        entries.append(
            SampleManifestEntry(
                sample_id=stem,
                byte_length=len(buffer),
                family_label=labels.get(stem),
                bytes_path=str(bytes_files[stem]),
                asm_path=str(asm_files[stem]),
                section_summary=_summarize(bin),
            )
        )
    return entries


def _scan_pe_dir(root: Path, labels: dict[str, int], name_map) -> list[SampleManifestEntry]:
    entries = []
    seen: dict[str, Path] = {}
    for path in sorted(p for p in root.iterdir() if p.is_file()):
        stem = path.stem
        if stem in seen:
            raise DuplicateSampleId(f"{stem!r} from both {seen[stem]} and {path}")
        seen[stem] = path
        data = path.read_bytes()
        if not data:
            log.warning("%s: empty file; skipped", path)
            continue
        try:
            bin = parse_pe(data, sample_id=stem, name_map=name_map)
        except SecimgError as exc:
            log.warning("%s: %s; skipped", path, exc)
            continue
        entries.append(
            SampleManifestEntry(
                sample_id=stem,
                byte_length=len(data),
                family_label=labels.get(stem),
                pe_path=str(path),
                section_summary=_summarize(bin),
            )
        )
    return entries


def load_sectioned(entry: SampleManifestEntry, name_map=None) -> SectionedBinary:
    """Re-parse a manifest entry's source files into a SectionedBinary."""
    if entry.pe_path:
        return parse_pe(Path(entry.pe_path).read_bytes(), entry.sample_id, name_map)
    with open(entry.bytes_path, encoding="ascii", errors="replace") as fh:
        buffer = parse_bytes_file(fh)
    with open(entry.asm_path, encoding="latin-1") as fh:
        return parse_asm_sections(fh, buffer, entry.sample_id, name_map)


def write_manifest(entries: list[SampleManifestEntry], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in sorted(entries, key=lambda e: e.sample_id):
            fh.write(entry.to_json() + "\n")


def read_manifest(path: str | Path) -> list[SampleManifestEntry]:
    with open(path, encoding="utf-8") as fh:
        return [SampleManifestEntry.from_json(line) for line in fh if line.strip()]


def stratified_split(
    manifest: list[SampleManifestEntry],
    holdout_fraction: float,
    seed: int,
) -> tuple[list[SampleManifestEntry], list[SampleManifestEntry]]:
    """Deterministic per-family proportional split.

    Per family the holdout takes ``floor(n * fraction)`` samples, clamped so
    that every family with at least two samples lands on both sides.  The
    partition depends only on ids, labels, the fraction and the seed -- not
    on manifest order.

    Raises:
        UnlabeledSample: if any entry has no family label.
    """
    if not 0.0 < holdout_fraction < 1.0:
        raise ValueError("holdout fraction must be in (0, 1)")
    by_family: dict[int, list[SampleManifestEntry]] = {}
    for entry in manifest:
        if entry.family_label is None:
            raise UnlabeledSample(f"{entry.sample_id} has no family label")
        by_family.setdefault(entry.family_label, []).append(entry)

    rng = np.random.RandomState(seed)
    train: list[SampleManifestEntry] = []
    holdout: list[SampleManifestEntry] = []
    for family in sorted(by_family):
        group = sorted(by_family[family], key=lambda e: e.sample_id)
        n = len(group)
        # +1e-9 guards against float artifacts like 10 * 0.3 = 2.999...
        n_hold = math.floor(n * holdout_fraction + 1e-9)
        if n >= 2:
            n_hold = min(max(n_hold, 1), n - 1)
        else:
            n_hold = 0
        order = rng.permutation(n)
        chosen = set(order[:n_hold].tolist())
        for i, entry in enumerate(group):
            (holdout if i in chosen else train).append(entry)

    train.sort(key=lambda e: e.sample_id)
    holdout.sort(key=lambda e: e.sample_id)
    return train, holdout


# --------------------------------------------------------------------------
# MSIT tensor container
# --------------------------------------------------------------------------


def write_msit(path: str | Path, pixels: np.ndarray) -> None:
    """Write a (channels, height, width) uint8 array as an MSIT file."""
    pixels = np.ascontiguousarray(pixels)
    if pixels.dtype != np.uint8 or pixels.ndim != 3:
        raise ValueError(f"expected a 3-D uint8 array, got {pixels.dtype} {pixels.shape}")
    c, h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(_MSIT_HEADER.pack(MSIT_MAGIC, MSIT_VERSION, MSIT_DTYPE_UINT8, c, h, w))
        fh.write(pixels.tobytes())


def read_msit(path: str | Path) -> np.ndarray:
    """Read an MSIT file back into a (channels, height, width) uint8 array."""
    raw = Path(path).read_bytes()
    if len(raw) < _MSIT_HEADER.size:
        raise MalformedTensorFile(f"{path}: truncated header")
    magic, version, dtype, c, h, w = _MSIT_HEADER.unpack_from(raw)
    if magic != MSIT_MAGIC:
        raise MalformedTensorFile(f"{path}: bad magic {magic!r}")
    if version != MSIT_VERSION:
        raise MalformedTensorFile(f"{path}: unsupported version {version}")
    if dtype != MSIT_DTYPE_UINT8:
        raise MalformedTensorFile(f"{path}: unsupported dtype {dtype}")
    payload = raw[_MSIT_HEADER.size :]
    if len(payload) != c * h * w:
        raise MalformedTensorFile(
            f"{path}: payload is {len(payload)} bytes, header says {c * h * w}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(c, h, w).copy()


def export_stack(stack: ChannelStack, out_path: str | Path) -> Path:
    """Write one stack to disk; a re-import reproduces it bit-identically."""
    out_path = Path(out_path)
    write_msit(out_path, stack.pixels)
    return out_path


def import_stack(path: str | Path) -> ChannelStack:
    """Load an MSIT file as a stack; the sample id is the file's stem."""
    path = Path(path)
    return ChannelStack(sample_id=path.stem, pixels=read_msit(path))


def export_png_channels(stack: ChannelStack, out_dir: str | Path) -> list[Path]:
    """Write each channel as ``<sample_id>.c<index>.png`` (8-bit gray, no interlace)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(stack.channels):
        path = out_dir / f"{stack.sample_id}.c{i}.png"
        Image.fromarray(stack.pixels[i], mode="L").save(path, format="PNG")
        paths.append(path)
    return paths
