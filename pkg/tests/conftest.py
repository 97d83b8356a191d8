"""Shared fixtures: synthetic hex-dump corpora and sectioned binaries."""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # pe_fixture import for test modules

from secimg.binfmt import ByteBuffer, SectionedBinary, SectionRecord, SectionSource
from secimg.sectioning import SectionCategory, categorize_section


def write_bytes_file(path: Path, data: bytes, origin: int = 0x401000) -> None:
    """Emit ``data`` as a 16-bytes-per-line hex dump starting at ``origin``."""
    lines = []
    for i in range(0, len(data), 16):
        chunk = data[i : i + 16]
        lines.append(f"{origin + i:08X} " + " ".join(f"{b:02X}" for b in chunk))
    path.write_text("\n".join(lines) + "\n")


def write_asm_file(path: Path, segments, origin: int = 0x401000) -> None:
    """Emit a minimal listing: one ``segname:address`` line per 16-byte row.

    ``segments`` is a list of (name, length) in file order.
    """
    lines = []
    addr = origin
    for name, length in segments:
        for off in range(0, max(length, 1), 16):
            if off < length:
                lines.append(f"{name}:{addr + off:08X}  db ?")
        addr += length
    path.write_text("\n".join(lines) + "\n")


def synthetic_binary(
    rng: np.random.RandomState,
    n_sections: int | None = None,
    max_len: int = 65536,
    full_coverage: bool = True,
    sample_id: str = "synth",
) -> SectionedBinary:
    """Random in-memory SectionedBinary with categorized, disjoint sections."""
    total = int(rng.randint(0, max_len + 1))
    n = int(n_sections if n_sections is not None else rng.randint(1, 9))
    cuts = sorted(int(c) for c in rng.randint(0, total + 1, size=n - 1)) if n > 1 else []
    bounds = [0] + cuts + [total]
    names = [".text", ".rdata", ".data", ".rsrc", ".evil", "UPX1", "CODE", ".tls"]
    data = bytes(rng.randint(0, 256, size=total, dtype=np.uint8).tobytes())
    records = []
    for i in range(n):
        start, end = bounds[i], bounds[i + 1]
        if not full_coverage and end - start > 2 and rng.rand() < 0.3:
            start += 1  # leave a one-byte gap before the section
        name = names[int(rng.randint(len(names)))]
        records.append(
            SectionRecord(
                name=name,
                category=categorize_section(name),
                start=start,
                length=end - start,
                source=SectionSource.ASM_LINE_PREFIX,
            )
        )
    return SectionedBinary(sample_id, ByteBuffer(data, 0), records, header_span=None)


# ---------------------------------------------------------------------------
# Synthetic three-family corpus (bytes+asm pairs on disk)
# ---------------------------------------------------------------------------

FAMILY_BYTE_RANGES = {
    1: ((0x10, 0x30), (0x30, 0x50)),  # (.text range, .rsrc range)
    2: ((0x60, 0x80), (0x80, 0xA0)),
    3: ((0xC0, 0xE0), (0xA0, 0xC0)),
}


def make_family_corpus(
    root: Path,
    per_family: int = 20,
    seed: int = 7,
    min_kb: int = 4,
    max_kb: int = 16,
) -> dict[str, int]:
    """Write bytes+asm pairs for three synthetic families; returns id->label."""
    rng = np.random.RandomState(seed)
    root.mkdir(parents=True, exist_ok=True)
    labels: dict[str, int] = {}
    for family, ((t_lo, t_hi), (r_lo, r_hi)) in FAMILY_BYTE_RANGES.items():
        for i in range(per_family):
            sample_id = f"fam{family}_{i:03d}"
            text_len = 16 * int(rng.randint(min_kb * 64, max_kb * 64))
            rsrc_len = 16 * int(rng.randint(min_kb * 32, max_kb * 32))
            text = rng.randint(t_lo, t_hi, size=text_len, dtype=np.uint8).tobytes()
            rsrc = rng.randint(r_lo, r_hi, size=rsrc_len, dtype=np.uint8).tobytes()
            data = text + rsrc
            write_bytes_file(root / f"{sample_id}.bytes", data)
            write_asm_file(root / f"{sample_id}.asm", [(".text", text_len), (".rsrc", rsrc_len)])
            labels[sample_id] = family
    return labels


def write_labels(path: Path, labels: dict[str, int]) -> None:
    rows = ["Id,Class"] + [f"{k},{v}" for k, v in sorted(labels.items())]
    path.write_text("\n".join(rows) + "\n")


@pytest.fixture(scope="session")
def family_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("family_corpus")
    labels = make_family_corpus(root / "samples")
    write_labels(root / "labels.csv", labels)
    return root / "samples", root / "labels.csv", labels
