"""Checkpoint persistence (DDCKPT01): config block plus named f64 arrays.

Layout, little-endian:

    bytes 0..7   magic "DDCKPT01"
    u32          version (currently 1)
    u32          config length, then that many bytes of UTF-8 JSON
    u32          entry count, then per entry:
                   u16 name length, name bytes,
                   u8 ndim, u32 * ndim dims,
                   f64 * prod(dims) raw data

Raw IEEE bytes make the round-trip bit-exact. The JSON config block holds
model/trainer metadata (shapes of training, RNG state, normalizer policy is
stored as arrays under ``buffer.*`` names).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"DDCKPT01"
VERSION = 1


class CheckpointError(ValueError):
    """Raised on bad magic, truncation, or version mismatch."""


def save_checkpoint(path, config: dict, arrays: dict[str, np.ndarray]) -> None:
    path = Path(path)
    cfg_blob = json.dumps(config, sort_keys=True).encode("utf-8")
    chunks = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(cfg_blob)), cfg_blob,
              struct.pack("<I", len(arrays))]
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        name_b = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(name_b)))
        chunks.append(name_b)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
        chunks.append(arr.tobytes())
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    tmp.replace(path)


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    blob = path.read_bytes()
    off = 0

    def take(n: int) -> bytes:
        nonlocal off
        if off + n > len(blob):
            raise CheckpointError(f"{path}: truncated at byte {off}")
        out = blob[off : off + n]
        off += n
        return out

    if take(8) != MAGIC:
        raise CheckpointError(f"{path}: bad magic")
    (version,) = struct.unpack("<I", take(4))
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    (cfg_len,) = struct.unpack("<I", take(4))
    config = json.loads(take(cfg_len).decode("utf-8"))
    (count,) = struct.unpack("<I", take(4))
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim)) if ndim else ()
        n_vals = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(take(8 * n_vals), dtype="<f8").astype(np.float64)
        arrays[name] = data.reshape(shape)
    if off != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - off} trailing bytes")
    return config, arrays
