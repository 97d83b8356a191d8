"""Fine-tuning of convolutional classifiers on MSIT channel stacks."""

__version__ = "0.1.0"

from .containers import ChannelMismatch, ManifestEntry, StackDataset, read_manifest, read_msit
from .models import (
    ARCHITECTURES,
    TrainSpec,
    UnsupportedArchitecture,
    adapt_first_conv,
    build_model,
    resnet50_spec,
    vgg16_spec,
)
from .train import EpochStats, TrainResult, load_checkpoint, predict, train

__all__ = [
    "ARCHITECTURES",
    "ChannelMismatch",
    "EpochStats",
    "ManifestEntry",
    "StackDataset",
    "TrainResult",
    "TrainSpec",
    "UnsupportedArchitecture",
    "adapt_first_conv",
    "build_model",
    "load_checkpoint",
    "predict",
    "read_manifest",
    "read_msit",
    "resnet50_spec",
    "train",
    "vgg16_spec",
]
