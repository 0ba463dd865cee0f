"""AlexNet convolutional feature stack with five ReLU taps.

Weights come from a local torch state dict when the config names one;
otherwise a deterministic seeded initialization is used so that extraction
stays byte-reproducible without any network access.
"""

from __future__ import annotations

import math
import os

import torch
from torch import nn

from .config import ALEXNET_TAP_CHANNELS, ExtractorConfig
from .errors import BackboneError


class AlexNetFeatures(nn.Module):
    """conv1..conv5 of AlexNet; forward returns the activations after each
    of the five ReLUs."""

    def __init__(self) -> None:
        super().__init__()
        self.conv1 = nn.Conv2d(3, 64, kernel_size=11, stride=4, padding=2)
        self.conv2 = nn.Conv2d(64, 192, kernel_size=5, padding=2)
        self.conv3 = nn.Conv2d(192, 384, kernel_size=3, padding=1)
        self.conv4 = nn.Conv2d(384, 256, kernel_size=3, padding=1)
        self.conv5 = nn.Conv2d(256, 256, kernel_size=3, padding=1)
        self.pool = nn.MaxPool2d(kernel_size=3, stride=2)
        self.relu = nn.ReLU(inplace=False)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        taps = []
        h = self.relu(self.conv1(x))
        taps.append(h)
        h = self.relu(self.conv2(self.pool(h)))
        taps.append(h)
        h = self.relu(self.conv3(self.pool(h)))
        taps.append(h)
        h = self.relu(self.conv4(h))
        taps.append(h)
        h = self.relu(self.conv5(h))
        taps.append(h)
        return taps


def _seeded_init(model: AlexNetFeatures, seed: int) -> None:
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for module in (model.conv1, model.conv2, model.conv3, model.conv4, model.conv5):
            fan_in = module.in_channels * module.kernel_size[0] * module.kernel_size[1]
            std = math.sqrt(2.0 / fan_in)
            module.weight.normal_(0.0, std, generator=g)
            module.bias.zero_()


def load_backbone(config: ExtractorConfig) -> AlexNetFeatures:
    model = AlexNetFeatures()
    if config.weight_path is not None:
        if not os.path.exists(config.weight_path):
            raise BackboneError(
                f"backbone weight file not found: {config.weight_path}; "
                "provide a torch state dict for the AlexNet conv stack or drop "
                "weight_path to use the seeded fallback initialization"
            )
        try:
            state = torch.load(config.weight_path, map_location="cpu", weights_only=True)
            model.load_state_dict(state)
        except Exception as exc:
            raise BackboneError(
                f"failed to load backbone weights from {config.weight_path}: {exc}; "
                "the file must be a torch state dict matching conv1..conv5"
            ) from exc
    else:
        _seeded_init(model, config.seed)
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model


def tap_channels() -> tuple[int, ...]:
    return ALEXNET_TAP_CHANNELS
