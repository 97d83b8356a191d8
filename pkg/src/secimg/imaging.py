"""Grayscale rendering of byte buffers: width schemes, rasterization, resizing.

A grayscale image here is a plain 2-D ``numpy.uint8`` array of shape
``(height, width)``; bytes fill rows left-to-right, top-to-bottom.  The
resize is a self-contained bilinear implementation (half-pixel centers,
edge clamping, round-half-up in float64) so that outputs are bit-identical
across platforms and library versions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .binfmt import ByteBuffer
from .errors import InvalidSize

GrayImage = np.ndarray  # 2-D uint8, shape (height, width)

# File-size-banded widths (half-open ranges, 1KB = 1024 bytes).
_SIZE_BANDS: tuple[tuple[int, int], ...] = (
    (10 * 1024, 32),
    (30 * 1024, 64),
    (60 * 1024, 128),
    (100 * 1024, 256),
    (200 * 1024, 384),
    (500 * 1024, 512),
    (1000 * 1024, 768),
)
_MAX_BAND_WIDTH = 1024


@dataclass(frozen=True)
class WidthScheme:
    """Row-width selection rule: size-banded table, sqrt of size, or fixed."""

    kind: str  # "nataraj" | "sqrt" | "fixed"
    fixed_width: int = 1024

    def __post_init__(self):
        if self.kind not in ("nataraj", "sqrt", "fixed"):
            raise ValueError(f"unknown width scheme {self.kind!r}")
        if self.fixed_width < 1:
            raise ValueError("fixed width must be >= 1")

    def width_for(self, file_size: int) -> int:
        if self.kind == "nataraj":
            return width_nataraj(file_size)
        if self.kind == "sqrt":
            return width_sqrt(file_size)
        return self.fixed_width


def width_nataraj(file_size: int) -> int:
    """Banded image width for a file size, per the classic size table."""
    if file_size < 1:
        raise InvalidSize(f"file size must be >= 1, got {file_size}")
    for upper, width in _SIZE_BANDS:
        if file_size < upper:
            return width
    return _MAX_BAND_WIDTH


def width_sqrt(file_size: int) -> int:
    """Image width as the file size's square root, rounded half-up, min 1."""
    if file_size < 1:
        raise InvalidSize(f"file size must be >= 1, got {file_size}")
    w = math.isqrt(file_size)
    # round half-up: bump when sqrt(n) >= w + 0.5, i.e. n >= w^2 + w + 1/4
    if file_size - w * w > w:
        w += 1
    return max(1, w)


def rasterize(buf: ByteBuffer | bytes, width: int) -> GrayImage:
    """Lay bytes out row-major at the given width, zero-padding the tail.

    An empty buffer yields a single all-zero row (keeps degenerate samples
    representable downstream).
    """
    if width < 1:
        raise ValueError(f"width must be >= 1, got {width}")
    data = buf.data if isinstance(buf, ByteBuffer) else bytes(buf)
    height = max(1, -(-len(data) // width))
    out = np.zeros(height * width, dtype=np.uint8)
    if data:
        out[: len(data)] = np.frombuffer(data, dtype=np.uint8)
    return out.reshape(height, width)


def resize(img: GrayImage, target_h: int, target_w: int) -> GrayImage:
    """Bilinear resize with half-pixel centers, edge clamping, round-half-up.

    All arithmetic is float64 with a fixed operation order, so results are
    deterministic across platforms.  An identity resize returns a bit-exact
    copy.
    """
    if target_h < 1 or target_w < 1:
        raise ValueError("target dimensions must be >= 1")
    img = np.asarray(img, dtype=np.uint8)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {img.shape}")
    h, w = img.shape
    if (h, w) == (target_h, target_w):
        return img.copy()

    y0, y1, fy = _axis_positions(h, target_h)
    x0, x1, fx = _axis_positions(w, target_w)
    src = img.astype(np.float64)
    top = src[y0][:, x0] * (1.0 - fx) + src[y0][:, x1] * fx
    bottom = src[y1][:, x0] * (1.0 - fx) + src[y1][:, x1] * fx
    out = top * (1.0 - fy)[:, None] + bottom * fy[:, None]
    return np.floor(out + 0.5).astype(np.uint8)


def _axis_positions(n_in: int, n_out: int):
    # half-pixel (align-corners=false) source positions, clamped to the edges
    pos = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    low = np.floor(pos)
    frac = pos - low
    low = low.astype(np.int64)
    high = np.clip(low + 1, 0, n_in - 1)
    low = np.clip(low, 0, n_in - 1)
    return low, high, frac
