"""Rotations, kinematics, velocities, resampling."""

import numpy as np
import pytest

from cadence.motion import (
    MotionSequence,
    compute_velocities,
    downsample,
    fk_positions,
    forward_kinematics,
    identity_rot6d,
    matrix_to_rot6d,
    rot6d_to_matrix,
    skeleton_preset,
    upsample_linear,
)
from cadence.rng import SplitMix64


def rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_y(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def random_rotation(rng):
    # QR of a random Gaussian matrix, sign-fixed to det +1
    m = rng.normal((3, 3))
    q, r = np.linalg.qr(m)
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 2] *= -1
    return q


# ---------------------------------------------------------------------------
# rotation-6d

def test_rot6d_identity():
    assert np.allclose(rot6d_to_matrix(identity_rot6d()), np.eye(3))


def test_rot6d_known_z_rotation():
    r = rot_z(np.pi / 2)
    v = np.concatenate([r[:, 0], r[:, 1]])
    assert np.abs(rot6d_to_matrix(v) - r).max() < 1e-12


def test_rot6d_orthonormality_on_random_inputs():
    rng = SplitMix64(0)
    v = rng.normal((200, 6))
    mats = rot6d_to_matrix(v)
    eye = np.eye(3)
    assert np.abs(np.swapaxes(mats, -1, -2) @ mats - eye).max() < 1e-9
    assert np.abs(np.linalg.det(mats) - 1.0).max() < 1e-9


def test_rot6d_degenerate_inputs_raise():
    with pytest.raises(ValueError):
        rot6d_to_matrix(np.zeros(6))
    with pytest.raises(ValueError):
        rot6d_to_matrix(np.array([1.0, 0, 0, 2.0, 0, 0]))  # parallel columns


def test_matrix_to_rot6d_identity():
    assert np.array_equal(matrix_to_rot6d(np.eye(3)), identity_rot6d())


def test_matrix_roundtrip_on_random_rotations():
    rng = SplitMix64(1)
    worst = 0.0
    for _ in range(1000):
        r = random_rotation(rng)
        back = rot6d_to_matrix(matrix_to_rot6d(r))
        worst = max(worst, np.abs(back - r).max())
    assert worst < 1e-9


def test_composition_roundtrips():
    r = rot_z(0.3) @ rot_y(-1.1)
    assert np.abs(rot6d_to_matrix(matrix_to_rot6d(r)) - r).max() < 1e-12


def test_matrix_to_rot6d_rejects_non_orthonormal():
    with pytest.raises(ValueError):
        matrix_to_rot6d(np.eye(3) * 1.5)


# ---------------------------------------------------------------------------
# forward kinematics

def make_frame(skel, rotations=None, translation=(0.0, 0.0, 0.0)):
    j = skel.joint_count
    frame = np.zeros(skel.frame_width)
    for idx in range(j):
        r = np.eye(3) if rotations is None or idx not in rotations else rotations[idx]
        frame[idx * 6 : idx * 6 + 6] = matrix_to_rot6d(r)
    frame[j * 6 :] = translation
    return frame


def test_fk_rest_pose_is_cumulative_offsets():
    skel = skeleton_preset("desk9")
    pos = forward_kinematics(skel, make_frame(skel))
    assert np.allclose(pos, skel.rest_positions())


def test_fk_root_rotation_symmetry():
    skel = skeleton_preset("desk9")
    pos0 = forward_kinematics(skel, make_frame(skel))
    pos1 = forward_kinematics(skel, make_frame(skel, {0: rot_y(np.pi)}))
    # 180 degrees about vertical: x and z negate relative to the root
    rel0 = pos0 - pos0[0]
    rel1 = pos1 - pos1[0]
    assert np.abs(rel1[:, 0] + rel0[:, 0]).max() < 1e-9
    assert np.abs(rel1[:, 2] + rel0[:, 2]).max() < 1e-9
    assert np.abs(rel1[:, 1] - rel0[:, 1]).max() < 1e-9


def test_fk_elbow_hand_geometry():
    # 3-joint chain: root -> elbow (+x offset) -> hand (+x offset); bend the
    # elbow 90 degrees about z and the hand lands above the elbow.
    from cadence.motion import SkeletonSpec

    skel = SkeletonSpec(
        parents=(-1, 0, 1),
        offsets=np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]),
        feet=(1,),
        hands=(2,),
    )
    pos = forward_kinematics(skel, make_frame(skel, {1: rot_z(np.pi / 2)}))
    assert np.allclose(pos[1], [1.0, 0.0, 0.0])
    assert np.abs(pos[2] - np.array([1.0, 1.0, 0.0])).max() < 1e-12


def test_fk_rigidity_under_root_motion():
    skel = skeleton_preset("desk9")
    rng = SplitMix64(2)
    base = make_frame(skel)
    moved = make_frame(skel, {0: random_rotation(rng)}, translation=(0.5, -1.0, 2.0))
    d0 = np.linalg.norm(
        forward_kinematics(skel, base)[:, None] - forward_kinematics(skel, base)[None], axis=-1
    )
    d1 = np.linalg.norm(
        forward_kinematics(skel, moved)[:, None] - forward_kinematics(skel, moved)[None], axis=-1
    )
    assert np.abs(d0 - d1).max() < 1e-9


def test_fk_malformed_frame():
    skel = skeleton_preset("desk9")
    with pytest.raises(ValueError):
        forward_kinematics(skel, np.zeros(10))


# ---------------------------------------------------------------------------
# velocities

def repeat_frames(skel, frame, n, fps=60):
    return MotionSequence(fps=fps, frames=np.tile(frame, (n, 1)))


def test_static_pose_zero_velocities():
    skel = skeleton_preset("desk9")
    seq = repeat_frames(skel, make_frame(skel), 10)
    vel = compute_velocities(seq, skel)
    assert np.abs(vel.pos).max() == 0.0
    assert np.abs(vel.rot).max() == 0.0


def test_rigid_translation_zero_root_relative_velocity():
    skel = skeleton_preset("desk9")
    frames = np.stack([make_frame(skel, translation=(0.1 * i, 0.0, 0.3 * i)) for i in range(8)])
    vel = compute_velocities(MotionSequence(fps=60, frames=frames), skel)
    assert np.abs(vel.pos).max() < 1e-12


def test_velocity_scaling_with_fps():
    # one joint moving +0.1 m per frame at 15 fps -> 1.5 m/s
    skel = skeleton_preset("desk9")
    frames = []
    for i in range(6):
        f = make_frame(skel)
        f[6 * skel.joint_count + 0] = 0.0  # root stays; move a limb via rotation-free trick
        frames.append(f)
    frames = np.stack(frames)
    # instead displace the root translation and check the ROT channels stay zero
    # while root-relative positions are unaffected; use rotation velocity check:
    seq = MotionSequence(fps=15, frames=frames)
    vel = compute_velocities(seq, skel)
    assert np.abs(vel.pos).max() == 0.0

    # direct arithmetic on the shared differencing helper
    from cadence.motion import forward_diff_t
    from cadence.tensor import Tensor

    x = np.arange(6.0)[:, None] * 0.1
    v = forward_diff_t(Tensor(x), 15.0).data
    assert np.allclose(v[:-1], 1.5)
    assert v[-1] == v[-2]  # duplicated final step


def test_velocities_need_two_frames():
    skel = skeleton_preset("desk9")
    with pytest.raises(ValueError):
        MotionSequence(fps=60, frames=np.zeros((1, skel.frame_width)))


# ---------------------------------------------------------------------------
# resampling

def linear_channel_sequence(skel, length, fps=60):
    base = make_frame(skel)
    frames = np.tile(base, (length, 1))
    ramp = np.linspace(0.0, 1.0, length)
    frames[:, skel.joint_count * 6 + 0] = ramp  # root x moves linearly in time
    frames[:, skel.joint_count * 6 + 2] = -2.0 * ramp
    return MotionSequence(fps=fps, frames=frames)


def test_down_up_preserves_retained_frames_bit_exactly():
    skel = skeleton_preset("desk9")
    rng = SplitMix64(3)
    frames = np.tile(make_frame(skel), (64, 1)) + 0.01 * rng.normal((64, skel.frame_width))
    seq = MotionSequence(fps=60, frames=frames)
    low = downsample(seq, 15)
    back = upsample_linear(low, 60)
    assert back.length == 4 * low.length
    assert np.array_equal(back.frames[::4], low.frames)


def test_upsample_two_frame_sequence_linear_spacing():
    skel = skeleton_preset("desk9")
    a, b = make_frame(skel), make_frame(skel, translation=(1.0, 0.0, 0.0))
    seq = MotionSequence(fps=15, frames=np.stack([a, b]))
    up = upsample_linear(seq, 60)
    x = up.frames[:, skel.joint_count * 6]
    assert np.allclose(x[:5], [0.0, 0.25, 0.5, 0.75, 1.0])


def test_linear_channel_survives_down_up_roundtrip():
    skel = skeleton_preset("desk9")
    seq = linear_channel_sequence(skel, 480)
    back = upsample_linear(downsample(seq, 15), 60)
    assert np.abs(back.frames - seq.frames).max() < 1e-12


def test_non_integer_ratio_rejected():
    skel = skeleton_preset("desk9")
    seq = linear_channel_sequence(skel, 30, fps=60)
    with pytest.raises(ValueError):
        downsample(seq, 45)


def test_vectorized_fk_matches_per_frame():
    skel = skeleton_preset("desk10")
    rng = SplitMix64(4)
    frames = np.stack(
        [
            make_frame(
                skel,
                {j: random_rotation(rng) for j in range(skel.joint_count)},
                translation=tuple(rng.normal(3)),
            )
            for _ in range(5)
        ]
    )
    batch = fk_positions(skel, frames)
    for i in range(5):
        assert np.abs(batch[i] - forward_kinematics(skel, frames[i])).max() < 1e-12
