"""Extractor configuration.

The default backbone is the five-layer AlexNet convolutional feature stack
used by linear-calibrated LPIPS; inputs are scaled to [-1, 1] and then
shifted/scaled per channel with the LPIPS calibration constants.  The full
configuration is recorded verbatim in a sidecar metadata header next to each
output file, because LPIPS values are not comparable across mismatched
preprocessing.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from .errors import ValidationError

# Per-channel shift/scale applied after mapping pixels to [-1, 1], as in the
# reference LPIPS scaling layer.
LPIPS_SHIFT = (-0.030, -0.088, -0.188)
LPIPS_SCALE = (0.458, 0.448, 0.450)

# Channel counts of the five AlexNet ReLU taps.
ALEXNET_TAP_CHANNELS = (64, 192, 384, 256, 256)


@dataclass(frozen=True)
class Preprocessing:
    """Input pipeline: optional (width, height) resize, then per-channel
    shift/scale on the [-1, 1] representation."""

    resize: tuple[int, int] | None = None
    shift: tuple[float, float, float] = LPIPS_SHIFT
    scale: tuple[float, float, float] = LPIPS_SCALE

    def __post_init__(self) -> None:
        if self.resize is not None:
            w, h = self.resize
            if w <= 0 or h <= 0:
                raise ValidationError(f"resize dimensions must be positive, got {self.resize}")
        if len(self.shift) != 3 or len(self.scale) != 3:
            raise ValidationError("shift and scale must each have 3 channel entries")
        if any(s == 0 for s in self.scale):
            raise ValidationError("scale entries must be non-zero")


@dataclass(frozen=True)
class ExtractorConfig:
    """Backbone, tap selection, preprocessing, and weight sources.

    `weight_path` optionally points at a torch state dict for the backbone;
    when absent a deterministic seeded initialization is used instead.
    `linear_weight_path` optionally points at learned per-channel LPIPS
    weights (torch state dict or .npz); when absent seeded non-negative
    weights are generated.  `variant` records which LPIPS flavor the learned
    weights implement ("linear" = linear-calibrated).
    """

    backbone: str = "alexnet-lpips"
    layers: tuple[int, ...] = (0, 1, 2, 3, 4)
    preprocessing: Preprocessing = Preprocessing()
    weight_path: str | None = None
    linear_weight_path: str | None = None
    variant: str = "linear"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.backbone != "alexnet-lpips":
            raise ValidationError(f"unknown backbone {self.backbone!r}; supported: alexnet-lpips")
        if not self.layers:
            raise ValidationError("layer selection must be non-empty")
        n_taps = len(ALEXNET_TAP_CHANNELS)
        bad = [l for l in self.layers if not (0 <= l < n_taps)]
        if bad:
            raise ValidationError(f"layer ids out of range [0, {n_taps - 1}]: {bad}")
        if len(set(self.layers)) != len(self.layers):
            raise ValidationError(f"duplicate layer ids in {self.layers}")

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["preprocessing"] = {
            "resize": list(self.preprocessing.resize) if self.preprocessing.resize else None,
            "shift": list(self.preprocessing.shift),
            "scale": list(self.preprocessing.scale),
        }
        doc["layers"] = list(self.layers)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ExtractorConfig":
        if not isinstance(doc, dict):
            raise ValidationError("config document must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(doc)
        if "layers" in kwargs:
            kwargs["layers"] = tuple(kwargs["layers"])
        if "preprocessing" in kwargs:
            p = kwargs["preprocessing"]
            kwargs["preprocessing"] = Preprocessing(
                resize=tuple(p["resize"]) if p.get("resize") else None,
                shift=tuple(p.get("shift", LPIPS_SHIFT)),
                scale=tuple(p.get("scale", LPIPS_SCALE)),
            )
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str) -> "ExtractorConfig":
        try:
            with open(path, "r", encoding="utf-8") as f:
                doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(doc)
