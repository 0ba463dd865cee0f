"""Feature extraction: image -> unit-normalized activations -> PFEAT file,
plus learned per-channel weights -> PFW file, and a tree-mirroring batch mode.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
import torch
from PIL import Image

from .backbone import AlexNetFeatures, load_backbone, tap_channels
from .config import ExtractorConfig
from .errors import BackboneError, DecodeError
from .pfio import pfeat_bytes, write_pfw

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")


def _load_image(path: str) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except OSError as exc:
        raise DecodeError(f"cannot decode image {path}: {exc}") from exc


def _preprocess(pixels: np.ndarray, config: ExtractorConfig) -> torch.Tensor:
    pre = config.preprocessing
    if pre.resize is not None:
        w, h = pre.resize
        with Image.fromarray(pixels, "RGB") as img:
            pixels = np.asarray(img.resize((w, h), Image.BILINEAR), dtype=np.uint8)
    x = pixels.astype(np.float64) / 255.0 * 2.0 - 1.0
    shift = np.asarray(pre.shift, dtype=np.float64)
    scale = np.asarray(pre.scale, dtype=np.float64)
    x = (x - shift) / scale
    # (H, W, 3) -> (1, 3, H, W) float32
    return torch.from_numpy(np.ascontiguousarray(x.transpose(2, 0, 1), dtype=np.float32)).unsqueeze(0)


def _unit_normalize(act: np.ndarray) -> np.ndarray:
    """Scale each spatial channel vector to unit Euclidean norm; vectors that
    are exactly zero stay zero."""
    act64 = act.astype(np.float64)
    norms = np.sqrt((act64 * act64).sum(axis=0, keepdims=True))
    safe = np.where(norms == 0.0, 1.0, norms)
    return (act64 / safe).astype(np.float32)


def compute_features(
    pixels: np.ndarray, config: ExtractorConfig, model: AlexNetFeatures | None = None
) -> list[tuple[int, np.ndarray]]:
    if model is None:
        model = load_backbone(config)
    with torch.no_grad():
        taps = model(_preprocess(pixels, config))
    layers = []
    for layer_id in config.layers:
        act = taps[layer_id].squeeze(0).numpy()
        layers.append((layer_id, _unit_normalize(act)))
    return layers


def _write_with_header(out_path: str, blob: bytes, config: ExtractorConfig) -> None:
    from .pfio import _atomic_write

    _atomic_write(out_path, blob)
    header = {"format": "PFT1", "config": config.to_dict()}
    _atomic_write(out_path + ".meta.json", json.dumps(header, indent=1, sort_keys=True).encode() + b"\n")


def extract(
    image_path: str,
    config: ExtractorConfig,
    out_path: str,
    model: AlexNetFeatures | None = None,
) -> None:
    """Run the backbone over one image and write a PFEAT file (plus a sidecar
    `.meta.json` header recording the exact configuration)."""
    pixels = _load_image(image_path)
    layers = compute_features(pixels, config, model)
    _write_with_header(out_path, pfeat_bytes(layers), config)


def _load_linear_weights(config: ExtractorConfig) -> list[np.ndarray]:
    path = config.linear_weight_path
    channels = [tap_channels()[l] for l in config.layers]
    if path is None:
        # Deterministic seeded fallback: non-negative per-channel weights.
        rng = np.random.default_rng(config.seed)
        return [np.abs(rng.standard_normal(c)).astype(np.float32) / c for c in channels]
    if not os.path.exists(path):
        raise BackboneError(
            f"linear weight file not found: {path}; provide an .npz with arrays "
            "w0..w4 or a torch state dict with lin<k>.model.1.weight entries, "
            "or drop linear_weight_path to use the seeded fallback"
        )
    try:
        if path.endswith(".npz"):
            with np.load(path) as npz:
                vecs = [np.asarray(npz[f"w{l}"], dtype=np.float32).reshape(-1) for l in config.layers]
        else:
            state = torch.load(path, map_location="cpu", weights_only=True)
            vecs = []
            for l in config.layers:
                key = f"lin{l}.model.1.weight"
                vecs.append(state[key].reshape(-1).numpy().astype(np.float32))
    except Exception as exc:
        raise BackboneError(f"failed to load linear weights from {path}: {exc}") from exc
    for l, v, c in zip(config.layers, vecs, channels):
        if v.shape[0] != c:
            raise BackboneError(f"layer {l}: expected {c} weights, got {v.shape[0]}")
        if (v < 0).any():
            raise BackboneError(f"layer {l}: learned weights must be non-negative")
    return vecs


def export_weights(config: ExtractorConfig, out_path: str) -> None:
    """Write the learned per-channel LPIPS weights for the selected layers as
    a PFW file."""
    write_pfw(out_path, _load_linear_weights(config))


@dataclass
class BatchSummary:
    succeeded: list[str] = field(default_factory=list)
    failed: list[tuple[str, str]] = field(default_factory=list)

    @property
    def failure_count(self) -> int:
        return len(self.failed)


def batch_extract(image_dir: str, config: ExtractorConfig, out_dir: str) -> BatchSummary:
    """Extract features for every image under `image_dir`, mirroring the tree
    under `out_dir` with one `<stem>.pfeat` per image.  Failures are recorded
    in the summary and do not stop the run; re-runs overwrite byte-identically.
    """
    model = load_backbone(config)
    summary = BatchSummary()
    for root, _dirs, files in sorted(os.walk(image_dir)):
        for name in sorted(files):
            if not name.lower().endswith(IMAGE_EXTENSIONS):
                continue
            src = os.path.join(root, name)
            rel = os.path.relpath(src, image_dir)
            dst = os.path.join(out_dir, os.path.splitext(rel)[0] + ".pfeat")
            os.makedirs(os.path.dirname(dst), exist_ok=True)
            try:
                extract(src, config, dst, model=model)
            except DecodeError as exc:
                summary.failed.append((rel, str(exc)))
            else:
                summary.succeeded.append(rel)
    return summary
