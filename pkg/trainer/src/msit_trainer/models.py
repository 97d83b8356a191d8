"""Model construction: standard convolutional backbones with adapted inputs.

The backbones come from torchvision.  The input convolution is rebuilt for
the stack's channel count: with three channels the source kernel is kept
as-is, otherwise channels beyond the source ones (or all of them, when
narrowing) are initialized with the source kernel's channel mean, which
preserves the layer's response statistics; the classifier head is replaced
with a 9-way (configurable) output.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn
from torchvision import models as tv_models

ARCHITECTURES = ("vgg16", "resnet50")


class UnsupportedArchitecture(Exception):
    """Asked for a backbone this trainer does not build."""


@dataclass
class TrainSpec:
    """Architecture plus optimizer settings (defaults via the factories below)."""

    architecture: str
    in_channels: int
    epochs: int
    batch_size: int
    learning_rate: float
    lr_decay: float | None  # per-epoch exponential decay rate, or None
    weight_decay: float
    momentum: float
    n_classes: int = 9
    pretrained: bool = False


def vgg16_spec(in_channels: int = 3, pretrained: bool = False, n_classes: int = 9) -> TrainSpec:
    return TrainSpec("vgg16", in_channels, epochs=20, batch_size=8,
                     learning_rate=0.001, lr_decay=None, weight_decay=0.0005,
                     momentum=0.9, n_classes=n_classes, pretrained=pretrained)


def resnet50_spec(in_channels: int = 3, pretrained: bool = False, n_classes: int = 9) -> TrainSpec:
    return TrainSpec("resnet50", in_channels, epochs=15, batch_size=64,
                     learning_rate=0.01, lr_decay=0.9, weight_decay=0.006,
                     momentum=0.9, n_classes=n_classes, pretrained=pretrained)


def spec_for(architecture: str, **kwargs) -> TrainSpec:
    if architecture == "vgg16":
        return vgg16_spec(**kwargs)
    if architecture == "resnet50":
        return resnet50_spec(**kwargs)
    raise UnsupportedArchitecture(architecture)


def adapt_first_conv(conv: nn.Conv2d, in_channels: int) -> nn.Conv2d:
    """Rebuild a convolution for ``in_channels`` inputs via channel-mean filling.

    ``in_channels == conv.in_channels`` returns the layer unchanged (the
    source weights load as-is).  Extra channels get the mean of the source
    kernel's input slices; narrowing replaces every slice with that mean.
    """
    if in_channels == conv.in_channels:
        return conv
    new = nn.Conv2d(
        in_channels,
        conv.out_channels,
        kernel_size=conv.kernel_size,
        stride=conv.stride,
        padding=conv.padding,
        dilation=conv.dilation,
        bias=conv.bias is not None,
    )
    with torch.no_grad():
        weight = conv.weight
        mean = weight.mean(dim=1, keepdim=True)
        if in_channels < conv.in_channels:
            new.weight.copy_(mean.expand(-1, in_channels, -1, -1))
        else:
            extra = mean.expand(-1, in_channels - conv.in_channels, -1, -1)
            new.weight.copy_(torch.cat([weight, extra], dim=1))
        if conv.bias is not None:
            new.bias.copy_(conv.bias)
    return new


def _backbone(architecture: str, pretrained: bool):
    weights = "IMAGENET1K_V1" if pretrained else None
    if architecture == "vgg16":
        return tv_models.vgg16(weights=weights)
    if architecture == "resnet50":
        return tv_models.resnet50(weights=weights)
    raise UnsupportedArchitecture(architecture)


def build_model(spec: TrainSpec) -> nn.Module:
    """Backbone with a rebuilt input layer and an ``n_classes``-way head."""
    if spec.in_channels < 1:
        raise ValueError("in_channels must be >= 1")
    model = _backbone(spec.architecture, spec.pretrained)
    if spec.architecture == "vgg16":
        model.features[0] = adapt_first_conv(model.features[0], spec.in_channels)
        model.classifier[-1] = nn.Linear(model.classifier[-1].in_features, spec.n_classes)
    else:
        model.conv1 = adapt_first_conv(model.conv1, spec.in_channels)
        model.fc = nn.Linear(model.fc.in_features, spec.n_classes)
    return model


def first_conv(model: nn.Module, architecture: str) -> nn.Conv2d:
    return model.features[0] if architecture == "vgg16" else model.conv1
