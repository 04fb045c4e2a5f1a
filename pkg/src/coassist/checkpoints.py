"""Flat binary checkpoints: named float64 arrays with a shape manifest.

Layout (all little-endian): magic "CKPT", u16 format version, length-prefixed
type tag, u32 array count, then per array a length-prefixed name, u8 rank and
u32 dims; raw float64 data for every array follows in manifest order.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

MAGIC = b"CKPT"
FORMAT_VERSION = 1


def save_arrays(path, type_tag: str, arrays: Dict[str, np.ndarray]) -> None:
    """Write named arrays to a checkpoint file; order follows the dict."""
    tag = type_tag.encode("ascii")
    if not 0 < len(tag) < 256:
        raise ValueError("type tag must be 1..255 ascii characters")
    header = [struct.pack("<4sH", MAGIC, FORMAT_VERSION),
              struct.pack("<B", len(tag)), tag,
              struct.pack("<I", len(arrays))]
    payload = []
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype="<f8")
        nb = name.encode("ascii")
        if not 0 < len(nb) < 256:
            raise ValueError(f"array name {name!r} must be 1..255 ascii characters")
        if arr.ndim > 255:
            raise ValueError("array rank too large")
        header.append(struct.pack("<B", len(nb)))
        header.append(nb)
        header.append(struct.pack("<B", arr.ndim))
        header.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        payload.append(arr.tobytes())
    Path(path).write_bytes(b"".join(header) + b"".join(payload))


def load_arrays(path, expected_tag: Optional[str] = None) -> Tuple[str, Dict[str, np.ndarray]]:
    """Read a checkpoint; returns (type_tag, name -> array)."""
    blob = Path(path).read_bytes()
    off = 0

    def take(n: int) -> bytes:
        nonlocal off
        if off + n > len(blob):
            raise ValueError(f"truncated checkpoint file {path}")
        out = blob[off : off + n]
        off += n
        return out

    magic, version = struct.unpack("<4sH", take(6))
    if magic != MAGIC:
        raise ValueError(f"{path} is not a checkpoint file")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (tag_len,) = struct.unpack("<B", take(1))
    tag = take(tag_len).decode("ascii")
    if expected_tag is not None and tag != expected_tag:
        raise ValueError(f"checkpoint type {tag!r}, expected {expected_tag!r}")
    (count,) = struct.unpack("<I", take(4))
    manifest = []
    for _ in range(count):
        (name_len,) = struct.unpack("<B", take(1))
        name = take(name_len).decode("ascii")
        (rank,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{rank}I", take(4 * rank)) if rank else ()
        manifest.append((name, shape))
    arrays = {}
    for name, shape in manifest:
        size = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(take(8 * size), dtype="<f8")
        arrays[name] = data.reshape(shape).astype(np.float64).copy()
    if off != len(blob):
        raise ValueError(f"trailing bytes in checkpoint file {path}")
    return tag, arrays
