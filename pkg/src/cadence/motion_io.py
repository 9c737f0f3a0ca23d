"""Bit-exact binary persistence for motion sequences (MOTSEQ01).

Layout, little-endian:

    bytes 0..7   magic "MOTSEQ01"
    u32          version (currently 1)
    u32          J (joint count)
    u32          L (frame count)
    f32          fps
    f64 * L*(J*6+3)   frame data, row-major

Raw IEEE bytes are written, so save/load round-trips are bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .motion import MotionSequence

MAGIC = b"MOTSEQ01"
VERSION = 1
_HEADER = struct.Struct("<III f")


class MotionFormatError(ValueError):
    """Raised for bad magic, truncation, or version mismatch."""


def save_motion(seq: MotionSequence, path) -> None:
    path = Path(path)
    j = seq.joint_count
    payload = np.ascontiguousarray(seq.frames, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(VERSION, j, seq.length, float(seq.fps)))
        fh.write(payload)


def load_motion(path) -> MotionSequence:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < len(MAGIC) + _HEADER.size:
        raise MotionFormatError(f"{path}: truncated header")
    if blob[: len(MAGIC)] != MAGIC:
        raise MotionFormatError(f"{path}: bad magic {blob[:8]!r}")
    version, j, length, fps = _HEADER.unpack_from(blob, len(MAGIC))
    if version != VERSION:
        raise MotionFormatError(f"{path}: unsupported version {version}")
    width = j * 6 + 3
    start = len(MAGIC) + _HEADER.size
    expected = start + length * width * 8
    if len(blob) != expected:
        raise MotionFormatError(
            f"{path}: payload size {len(blob) - start} != {length * width * 8}"
        )
    frames = np.frombuffer(blob, dtype="<f8", count=length * width, offset=start)
    frames = frames.reshape(length, width).astype(np.float64)
    fps_int = int(round(fps))
    return MotionSequence(fps=fps_int, frames=frames)
