"""Writers for the PFEAT/PFW binary containers (little-endian).

PFEAT: magic "PFT1", u32 layer count, then per layer u32 layer_id, u32 C,
u32 H, u32 W followed by C*H*W float32 channel-major.
PFW: magic "PFW1", u32 layer count, then per layer u32 C followed by C
float32 values.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

PFEAT_MAGIC = b"PFT1"
PFW_MAGIC = b"PFW1"


def _atomic_write(path: str, blob: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".featx-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def pfeat_bytes(layers: list[tuple[int, np.ndarray]]) -> bytes:
    parts = [PFEAT_MAGIC, struct.pack("<I", len(layers))]
    for layer_id, act in layers:
        act = np.ascontiguousarray(act, dtype="<f4")
        if act.ndim != 3:
            raise ValueError(f"layer {layer_id}: expected (C, H, W), got {act.shape}")
        c, h, w = act.shape
        parts.append(struct.pack("<IIII", layer_id, c, h, w))
        parts.append(act.tobytes())
    return b"".join(parts)


def write_pfeat(path: str, layers: list[tuple[int, np.ndarray]]) -> None:
    _atomic_write(path, pfeat_bytes(layers))


def write_pfw(path: str, weights: list[np.ndarray]) -> None:
    parts = [PFW_MAGIC, struct.pack("<I", len(weights))]
    for w in weights:
        w = np.ascontiguousarray(w, dtype="<f4")
        if w.ndim != 1:
            raise ValueError(f"expected 1-D weight vector, got shape {w.shape}")
        parts.append(struct.pack("<I", w.shape[0]))
        parts.append(w.tobytes())
    _atomic_write(path, b"".join(parts))
