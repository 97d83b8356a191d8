"""Per-category sub-images (Split and Mask) and multi-channel stack composition.

Split concatenates one category's bytes and rasterizes them, discarding the
sample's global layout.  Mask keeps the full-length layout and zeroes every
byte outside the category, so all mask channels of one sample share their
pre-resize dimensions.  A channel spec composes whole-file and per-category
channels, in order, into one fixed-arity stack.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .binfmt import SectionedBinary
from .imaging import GrayImage, rasterize, resize
from .sectioning import SectionCategory, category_spans

# Selector token for the whole-file channel in spec strings and stack specs.
WHOLE_IMAGE = "imgs-1024"


class SegmentationMode(enum.Enum):
    SPLIT = "split"
    MASK = "mask"


_SELECTOR_TOKENS: dict[str, object] = {
    "imgs-1024": WHOLE_IMAGE,
    "imgs": WHOLE_IMAGE,
    "whole": WHOLE_IMAGE,
    "header": SectionCategory.HEADER,
    ".text": SectionCategory.TEXT,
    ".rdata": SectionCategory.RDATA,
    ".data": SectionCategory.DATA,
    ".rsrc": SectionCategory.RSRC,
    "others": SectionCategory.OTHER,
    "other": SectionCategory.OTHER,
}

_CANONICAL_TOKENS = {
    SectionCategory.HEADER: "header",
    SectionCategory.TEXT: ".text",
    SectionCategory.RDATA: ".rdata",
    SectionCategory.DATA: ".data",
    SectionCategory.RSRC: ".rsrc",
    SectionCategory.OTHER: "others",
}


@dataclass(frozen=True)
class ChannelSpec:
    """Ordered channel selectors plus the segmentation mode and row width.

    Selectors are either :data:`WHOLE_IMAGE` or a :class:`SectionCategory`;
    order is significant and preserved in the output stack.
    """

    selectors: tuple
    mode: SegmentationMode
    width: int = 1024

    def __post_init__(self):
        if not self.selectors:
            raise ValueError("channel spec needs at least one selector")
        if len(set(self.selectors)) != len(self.selectors):
            raise ValueError("channel selectors must be unique")
        for sel in self.selectors:
            if sel != WHOLE_IMAGE and not isinstance(sel, SectionCategory):
                raise ValueError(f"bad channel selector {sel!r}")
        if not isinstance(self.mode, SegmentationMode):
            raise ValueError(f"bad segmentation mode {self.mode!r}")
        if self.width < 1:
            raise ValueError("width must be >= 1")


@dataclass
class ChannelStack:
    """One multi-channel training example: equal-size channels, in spec order."""

    sample_id: str
    pixels: np.ndarray  # (channels, height, width) uint8
    spec: ChannelSpec | None = None
    label: int | None = None

    @property
    def channels(self) -> int:
        return self.pixels.shape[0]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]


def parse_channel_spec(text: str) -> ChannelSpec:
    """Parse ``mode=split|mask; channels=imgs-1024,.text,.rsrc; width=1024``."""
    mode: SegmentationMode | None = None
    selectors: list | None = None
    width = 1024
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        key, sep, value = part.partition("=")
        if not sep:
            raise ValueError(f"bad channel spec field {part!r}")
        key, value = key.strip().lower(), value.strip()
        if key == "mode":
            try:
                mode = SegmentationMode(value.lower())
            except ValueError:
                raise ValueError(f"bad segmentation mode {value!r}") from None
        elif key == "channels":
            selectors = [_parse_selector(tok) for tok in value.split(",") if tok.strip()]
        elif key == "width":
            width = int(value)
        else:
            raise ValueError(f"unknown channel spec key {key!r}")
    if mode is None or not selectors:
        raise ValueError("channel spec must set both mode= and channels=")
    return ChannelSpec(tuple(selectors), mode, width)


def _parse_selector(token: str):
    tok = token.strip()
    sel = _SELECTOR_TOKENS.get(tok.lower())
    if sel is not None:
        return sel
    try:
        return SectionCategory[tok.upper()]
    except KeyError:
        raise ValueError(f"unknown channel selector {token!r}") from None


def format_channel_spec(spec: ChannelSpec) -> str:
    """Canonical textual form of a spec (inverse of :func:`parse_channel_spec`)."""
    tokens = [
        sel if sel == WHOLE_IMAGE else _CANONICAL_TOKENS[sel] for sel in spec.selectors
    ]
    return f"mode={spec.mode.value};channels={','.join(tokens)};width={spec.width}"


def split_channel(bin: SectionedBinary, cat: SectionCategory, width: int = 1024) -> GrayImage:
    """Rasterize one category's bytes, concatenated in file order.

    An empty category yields a single zero row, keeping channel arity fixed.
    """
    spans = category_spans(bin, cat)
    data = b"".join(bin.buffer.data[s : s + length] for s, length in spans)
    return rasterize(data, width)


def mask_channel(bin: SectionedBinary, cat: SectionCategory, width: int = 1024) -> GrayImage:
    """Rasterize the whole file with every byte outside the category zeroed."""
    out = bytearray(len(bin.buffer.data))
    for start, length in category_spans(bin, cat):
        out[start : start + length] = bin.buffer.data[start : start + length]
    return rasterize(bytes(out), width)


def compose_stack(
    bin: SectionedBinary,
    spec: ChannelSpec,
    target_h: int = 224,
    target_w: int = 224,
) -> ChannelStack:
    """Build the stack for one sample: render each selector, resize, stack.

    Channel order is exactly the spec's selector order; every channel is
    resized independently to ``(target_h, target_w)``.
    """
    channels = []
    for sel in spec.selectors:
        if sel == WHOLE_IMAGE:
            img = rasterize(bin.buffer.data, spec.width)
        elif spec.mode is SegmentationMode.SPLIT:
            img = split_channel(bin, sel, spec.width)
        else:
            img = mask_channel(bin, sel, spec.width)
        channels.append(resize(img, target_h, target_w))
    return ChannelStack(bin.sample_id, np.stack(channels), spec)


def replicate_gray_to_3(img: GrayImage, sample_id: str = "") -> ChannelStack:
    """Expand a single grayscale image to a 3-channel stack of identical planes."""
    img = np.asarray(img, dtype=np.uint8)
    return ChannelStack(sample_id, np.stack([img, img, img]))
