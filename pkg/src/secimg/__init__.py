"""Section-segmented grayscale imaging of executables.

Converts PE files and header-stripped hex-dump/listing pairs into
section-categorized multi-channel grayscale stacks, exports them as
reproducible datasets, and scores classifiers with multi-class logloss.
"""

__version__ = "0.1.0"

from .binfmt import (
    ByteBuffer,
    SectionedBinary,
    SectionRecord,
    parse_asm_sections,
    parse_bytes_file,
    parse_pe,
)
from .errors import SecimgError
from .imaging import WidthScheme, rasterize, resize, width_nataraj, width_sqrt
from .sectioning import CharacteristicsFlags, SectionCategory, categorize_section, category_spans
from .segmentation import (
    WHOLE_IMAGE,
    ChannelSpec,
    ChannelStack,
    SegmentationMode,
    compose_stack,
    mask_channel,
    parse_channel_spec,
    replicate_gray_to_3,
    split_channel,
)

__all__ = [
    "ByteBuffer",
    "ChannelSpec",
    "ChannelStack",
    "CharacteristicsFlags",
    "SecimgError",
    "SectionCategory",
    "SectionRecord",
    "SectionedBinary",
    "SegmentationMode",
    "WHOLE_IMAGE",
    "WidthScheme",
    "categorize_section",
    "category_spans",
    "compose_stack",
    "mask_channel",
    "parse_asm_sections",
    "parse_bytes_file",
    "parse_channel_spec",
    "parse_pe",
    "rasterize",
    "replicate_gray_to_3",
    "resize",
    "split_channel",
    "width_nataraj",
    "width_sqrt",
]
