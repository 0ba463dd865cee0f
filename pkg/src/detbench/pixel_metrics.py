"""Perceptibility metrics between clean and adversarial images.

L_p norms, PSNR, and SSIM operate on 8-bit buffers promoted to float64;
the LPIPS distance consumes externally produced deep features (PFEAT files)
and learned channel weights (PFW files). Identical images give L_p = 0,
PSNR = +inf, SSIM = 1, LPIPS = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

from .data_model import ImageBuffer
from .errors import ShapeError, ValidationError
from .pfio import read_pfeat, read_pfw

__all__ = [
    "NormBundle",
    "PerceptualFeatureSet",
    "LayerWeights",
    "DistanceStats",
    "lp_norms",
    "psnr",
    "ssim",
    "lpips_distance",
    "aggregate",
]

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DYNAMIC_RANGE = 255.0


@dataclass(frozen=True)
class NormBundle:
    l0: int
    l1: float
    l2: float
    linf: float


@dataclass(frozen=True)
class PerceptualFeatureSet:
    """Per-layer unit-normalized activations, (layer_id, float32 (C, H, W))."""

    layers: tuple[tuple[int, np.ndarray], ...]

    @classmethod
    def from_file(cls, path: str) -> "PerceptualFeatureSet":
        return cls(layers=tuple(read_pfeat(path)))

    def validate_unit_norm(self, tol: float = 1e-4) -> None:
        """Every spatial channel vector must have norm 1 (+-tol) or be zero."""
        for layer_id, act in self.layers:
            norms = np.sqrt(np.sum(act.astype(np.float64) ** 2, axis=0))
            bad = ~((np.abs(norms - 1.0) <= tol) | (norms == 0.0))
            if bad.any():
                raise ValidationError(
                    f"layer {layer_id}: {int(bad.sum())} channel vectors violate "
                    f"the unit-norm invariant"
                )


@dataclass(frozen=True)
class LayerWeights:
    weights: tuple[np.ndarray, ...]  # one non-negative float32 vector per layer

    def __post_init__(self):
        for k, w in enumerate(self.weights):
            if (w < 0).any():
                raise ValidationError(f"layer {k}: negative LPIPS weights")

    @classmethod
    def from_file(cls, path: str) -> "LayerWeights":
        return cls(weights=tuple(read_pfw(path)))


@dataclass(frozen=True)
class DistanceStats:
    mean: float
    std: float
    n: int

    def __str__(self) -> str:
        return f"{self.mean:.2f} ± {self.std:.2f}"


def _check_same_shape(a: ImageBuffer, b: ImageBuffer) -> None:
    if a.pixels.shape != b.pixels.shape:
        raise ShapeError(
            f"image dimensions differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def lp_norms(a: ImageBuffer, b: ImageBuffer) -> NormBundle:
    """L0/L1/L2/L_inf of the raw pixel difference over all H*W*3 values."""
    _check_same_shape(a, b)
    delta = b.as_float() - a.as_float()
    return NormBundle(
        l0=int(np.count_nonzero(delta)),
        l1=float(np.sum(np.abs(delta))),
        l2=float(np.sqrt(np.sum(delta * delta))),
        linf=float(np.max(np.abs(delta))) if delta.size else 0.0,
    )


def psnr(a: ImageBuffer, b: ImageBuffer) -> float:
    """10*log10(255^2 / MSE) in dB; +inf for identical images."""
    _check_same_shape(a, b)
    delta = b.as_float() - a.as_float()
    mse = float(np.mean(delta * delta))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(DYNAMIC_RANGE**2 / mse)


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


_SSIM_KERNEL = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)


def ssim(a: ImageBuffer, b: ImageBuffer) -> float:
    """Mean SSIM with an 11x11 Gaussian window (sigma 1.5), valid windows only,
    computed per channel and averaged over the three channels."""
    _check_same_shape(a, b)
    if a.width < SSIM_WINDOW or a.height < SSIM_WINDOW:
        raise ShapeError(
            f"image {a.width}x{a.height} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )
    c1 = (SSIM_K1 * DYNAMIC_RANGE) ** 2
    c2 = (SSIM_K2 * DYNAMIC_RANGE) ** 2
    fa, fb = a.as_float(), b.as_float()

    channel_means = []
    for ch in range(3):
        x, y = fa[:, :, ch], fb[:, :, ch]
        mu_x = convolve2d(x, _SSIM_KERNEL, mode="valid")
        mu_y = convolve2d(y, _SSIM_KERNEL, mode="valid")
        sig_x = convolve2d(x * x, _SSIM_KERNEL, mode="valid") - mu_x * mu_x
        sig_y = convolve2d(y * y, _SSIM_KERNEL, mode="valid") - mu_y * mu_y
        sig_xy = convolve2d(x * y, _SSIM_KERNEL, mode="valid") - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * sig_xy + c2)
        den = (mu_x * mu_x + mu_y * mu_y + c1) * (sig_x + sig_y + c2)
        channel_means.append(float(np.mean(num / den)))
    return sum(channel_means) / 3.0


def lpips_distance(
    fa: PerceptualFeatureSet,
    fb: PerceptualFeatureSet,
    w: LayerWeights,
    validate: bool = True,
) -> float:
    """Spatially averaged squared weighted feature difference, summed over layers."""
    if len(fa.layers) != len(fb.layers) or len(fa.layers) != len(w.weights):
        raise ShapeError(
            f"layer count mismatch: {len(fa.layers)} vs {len(fb.layers)} "
            f"features, {len(w.weights)} weight vectors"
        )
    if validate:
        fa.validate_unit_norm()
        fb.validate_unit_norm()
    total = 0.0
    for (id_a, act_a), (id_b, act_b), wl in zip(fa.layers, fb.layers, w.weights):
        if id_a != id_b or act_a.shape != act_b.shape:
            raise ShapeError(
                f"layer mismatch: ({id_a}, {act_a.shape}) vs ({id_b}, {act_b.shape})"
            )
        if wl.shape[0] != act_a.shape[0]:
            raise ShapeError(
                f"layer {id_a}: {wl.shape[0]} weights for {act_a.shape[0]} channels"
            )
        diff = act_a.astype(np.float64) - act_b.astype(np.float64)
        weighted = wl.astype(np.float64)[:, None, None] * diff
        _, h, wd = act_a.shape
        total += float(np.sum(weighted * weighted)) / (h * wd)
    return total


def aggregate(values: list[float]) -> DistanceStats:
    """Arithmetic mean and population standard deviation of per-image values."""
    if not values:
        raise ValidationError("cannot aggregate an empty value list")
    n = len(values)
    if any(math.isinf(v) for v in values):
        finite = [v for v in values if not math.isinf(v)]
        if not finite:
            return DistanceStats(mean=math.inf, std=0.0, n=n)
        return DistanceStats(mean=math.inf, std=math.nan, n=n)
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / n
    return DistanceStats(mean=mean, std=math.sqrt(var), n=n)
