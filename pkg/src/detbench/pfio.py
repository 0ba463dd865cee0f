"""Binary containers for perceptual features (PFEAT) and layer weights (PFW).

Both are little-endian. PFEAT: magic "PFT1", u32 layer count, then per layer
u32 layer_id, u32 C, u32 H, u32 W followed by C*H*W float32 channel-major.
PFW: magic "PFW1", u32 layer count, then per layer u32 C followed by C float32.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import ParseError

PFEAT_MAGIC = b"PFT1"
PFW_MAGIC = b"PFW1"


def _read_exact(f, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise ParseError(f"truncated file: expected {n} bytes for {what}, got {len(data)}")
    return data


def write_pfeat(path: str, layers: list[tuple[int, np.ndarray]]) -> None:
    """Write (layer_id, float32 array of shape (C, H, W)) records."""
    with open(path, "wb") as f:
        f.write(PFEAT_MAGIC)
        f.write(struct.pack("<I", len(layers)))
        for layer_id, act in layers:
            act = np.ascontiguousarray(act, dtype="<f4")
            if act.ndim != 3:
                raise ValueError(f"layer {layer_id}: expected (C, H, W), got {act.shape}")
            c, h, w = act.shape
            f.write(struct.pack("<IIII", layer_id, c, h, w))
            f.write(act.tobytes())


def read_pfeat(path: str) -> list[tuple[int, np.ndarray]]:
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, "magic")
        if magic != PFEAT_MAGIC:
            raise ParseError(f"{path}: bad magic {magic!r}, expected {PFEAT_MAGIC!r}")
        (n_layers,) = struct.unpack("<I", _read_exact(f, 4, "layer count"))
        layers = []
        for k in range(n_layers):
            layer_id, c, h, w = struct.unpack(
                "<IIII", _read_exact(f, 16, f"layer {k} header")
            )
            raw = _read_exact(f, 4 * c * h * w, f"layer {k} activations")
            act = np.frombuffer(raw, dtype="<f4").reshape(c, h, w).astype(np.float32)
            layers.append((layer_id, act))
        trailing = f.read(1)
        if trailing:
            raise ParseError(f"{path}: trailing bytes after last layer")
    return layers


def write_pfw(path: str, weights: list[np.ndarray]) -> None:
    """Write per-layer weight vectors (float32, length C_l)."""
    with open(path, "wb") as f:
        f.write(PFW_MAGIC)
        f.write(struct.pack("<I", len(weights)))
        for w in weights:
            w = np.ascontiguousarray(w, dtype="<f4")
            if w.ndim != 1:
                raise ValueError(f"expected 1-D weight vector, got shape {w.shape}")
            f.write(struct.pack("<I", w.shape[0]))
            f.write(w.tobytes())


def read_pfw(path: str) -> list[np.ndarray]:
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, "magic")
        if magic != PFW_MAGIC:
            raise ParseError(f"{path}: bad magic {magic!r}, expected {PFW_MAGIC!r}")
        (n_layers,) = struct.unpack("<I", _read_exact(f, 4, "layer count"))
        weights = []
        for k in range(n_layers):
            (c,) = struct.unpack("<I", _read_exact(f, 4, f"layer {k} channel count"))
            raw = _read_exact(f, 4 * c, f"layer {k} weights")
            weights.append(np.frombuffer(raw, dtype="<f4").astype(np.float32))
        trailing = f.read(1)
        if trailing:
            raise ParseError(f"{path}: trailing bytes after last layer")
    return weights
