import struct

import numpy as np
import pytest

from cadence.motion import MotionSequence
from cadence.motion_io import MAGIC, MotionFormatError, load_motion, save_motion
from cadence.rng import SplitMix64


def random_sequence(width=9, frames=5, fps=60):
    return MotionSequence(fps=fps, frames=SplitMix64(0).normal((frames, width * 6 + 3)))


def test_save_load_roundtrip_bit_exact(tmp_path):
    seq = random_sequence()
    path = tmp_path / "a.mot"
    save_motion(seq, path)
    loaded = load_motion(path)
    assert loaded.fps == seq.fps
    assert np.array_equal(loaded.frames, seq.frames)
    # re-saving yields identical bytes
    save_motion(loaded, tmp_path / "b.mot")
    assert (tmp_path / "a.mot").read_bytes() == (tmp_path / "b.mot").read_bytes()


def test_corrupted_magic_rejected(tmp_path):
    path = tmp_path / "bad.mot"
    save_motion(random_sequence(), path)
    blob = bytearray(path.read_bytes())
    blob[:8] = b"NOTMAGIC"
    path.write_bytes(bytes(blob))
    with pytest.raises(MotionFormatError):
        load_motion(path)


def test_truncated_file_rejected(tmp_path):
    path = tmp_path / "short.mot"
    save_motion(random_sequence(), path)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(MotionFormatError):
        load_motion(path)


def test_version_mismatch_rejected(tmp_path):
    path = tmp_path / "ver.mot"
    save_motion(random_sequence(), path)
    blob = bytearray(path.read_bytes())
    blob[8:12] = struct.pack("<I", 999)
    path.write_bytes(bytes(blob))
    with pytest.raises(MotionFormatError):
        load_motion(path)


def test_hand_encoded_fixture_decodes():
    """A file assembled byte-by-byte decodes to the expected 2-frame sequence."""
    j, length, fps = 1, 2, 30
    values = [float(i) / 8.0 for i in range(length * (j * 6 + 3))]
    blob = (
        MAGIC
        + struct.pack("<III f", 1, j, length, float(fps))
        + b"".join(struct.pack("<d", v) for v in values)
    )
    import tempfile, pathlib

    with tempfile.TemporaryDirectory() as d:
        path = pathlib.Path(d) / "fixture.mot"
        path.write_bytes(blob)
        seq = load_motion(path)
    assert seq.fps == 30
    assert seq.joint_count == 1
    assert np.array_equal(seq.frames, np.array(values).reshape(2, 9))
