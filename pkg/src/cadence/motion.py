"""Motion representation: rotation-6d frames, skeletons, kinematics.

A motion frame is ``J*6 + 3`` channels: a 6d rotation per joint (first two
columns of the rotation matrix, recovered by Gram-Schmidt) followed by the
root translation in meters. Forward kinematics and velocity computation are
written once against the differentiable tensor ops, so the loss stack and
the (pure numpy) evaluation stack share a single definition.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import ops
from .tensor import Tensor

VALID_FPS = (15, 30, 60)
_DEGENERATE_EPS = 1e-8


# ---------------------------------------------------------------------------
# skeletons

@dataclass(frozen=True)
class SkeletonSpec:
    """Joint tree with bone offsets and key-joint tags.

    ``parents[0]`` must be -1 (root); every other joint's parent has a lower
    index, which makes a single forward pass over joints valid FK order.
    """

    parents: tuple[int, ...]
    offsets: np.ndarray  # [J, 3] meters
    feet: tuple[int, ...]
    hands: tuple[int, ...]
    root: tuple[int, ...] = (0,)
    names: tuple[str, ...] = ()

    def __post_init__(self):
        offs = np.ascontiguousarray(np.asarray(self.offsets, dtype=np.float64))
        if offs.shape != (len(self.parents), 3):
            raise ValueError(f"offsets shape {offs.shape} != ({len(self.parents)}, 3)")
        if not np.all(np.isfinite(offs)):
            raise ValueError("non-finite bone offsets")
        if self.parents[0] != -1:
            raise ValueError("joint 0 must be the root (parent -1)")
        for j, p in enumerate(self.parents[1:], start=1):
            if not 0 <= p < j:
                raise ValueError(f"joint {j} has invalid parent {p} (tree order required)")
        tags = [set(self.feet), set(self.hands), set(self.root)]
        if sum(len(t) for t in tags) != len(set().union(*tags)):
            raise ValueError("key-joint tags must be disjoint")
        for t in set().union(*tags):
            if not 0 <= t < len(self.parents):
                raise ValueError(f"tag index {t} out of range")
        offs.setflags(write=False)
        object.__setattr__(self, "offsets", offs)

    @property
    def joint_count(self) -> int:
        return len(self.parents)

    @property
    def frame_width(self) -> int:
        return self.joint_count * 6 + 3

    def rest_positions(self) -> np.ndarray:
        """FK of the rest pose (identity rotations, zero translation), [J, 3]."""
        pos = np.zeros((self.joint_count, 3))
        for j in range(1, self.joint_count):
            pos[j] = pos[self.parents[j]] + self.offsets[j]
        return pos


def skeleton_preset(name: str) -> SkeletonSpec:
    """Built-in skeletons: ``desk9`` (default), ``desk10``, ``smpl24``."""
    if name == "desk9":
        return _desk_skeleton(head=False)
    if name == "desk10":
        return _desk_skeleton(head=True)
    if name == "smpl24":
        return _smpl24_skeleton()
    raise ValueError(f"unknown skeleton preset {name!r}")


def _desk_skeleton(head: bool) -> SkeletonSpec:
    names = [
        "root",
        "l_hip", "l_foot", "r_hip", "r_foot",
        "l_shoulder", "l_hand", "r_shoulder", "r_hand",
    ]
    parents = [-1, 0, 1, 0, 3, 0, 5, 0, 7]
    offsets = [
        [0.0, 0.0, 0.0],
        [0.12, -0.08, 0.0], [0.0, -0.85, 0.0],
        [-0.12, -0.08, 0.0], [0.0, -0.85, 0.0],
        [0.20, 0.45, 0.0], [0.55, 0.0, 0.0],
        [-0.20, 0.45, 0.0], [-0.55, 0.0, 0.0],
    ]
    if head:
        names.append("head")
        parents.append(0)
        offsets.append([0.0, 0.65, 0.0])
    return SkeletonSpec(
        parents=tuple(parents),
        offsets=np.asarray(offsets),
        feet=(2, 4),
        hands=(6, 8),
        root=(0,),
        names=tuple(names),
    )


def _smpl24_skeleton() -> SkeletonSpec:
    # SMPL joint tree with generic humanoid offsets (meters); used for
    # larger-skeleton configs, not for loading real SMPL data.
    names = (
        "pelvis", "l_hip", "r_hip", "spine1", "l_knee", "r_knee", "spine2",
        "l_ankle", "r_ankle", "spine3", "l_foot", "r_foot", "neck",
        "l_collar", "r_collar", "head", "l_shoulder", "r_shoulder",
        "l_elbow", "r_elbow", "l_wrist", "r_wrist", "l_hand", "r_hand",
    )
    parents = (-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16,
               17, 18, 19, 20, 21)
    offsets = np.array([
        [0.0, 0.0, 0.0],
        [0.09, -0.06, 0.0], [-0.09, -0.06, 0.0], [0.0, 0.11, 0.0],
        [0.04, -0.38, 0.0], [-0.04, -0.38, 0.0], [0.0, 0.14, 0.0],
        [0.0, -0.40, 0.0], [0.0, -0.40, 0.0], [0.0, 0.06, 0.0],
        [0.0, -0.06, 0.12], [0.0, -0.06, 0.12], [0.0, 0.21, 0.0],
        [0.08, 0.12, 0.0], [-0.08, 0.12, 0.0], [0.0, 0.07, 0.0],
        [0.12, 0.04, 0.0], [-0.12, 0.04, 0.0], [0.26, 0.0, 0.0],
        [-0.26, 0.0, 0.0], [0.25, 0.0, 0.0], [-0.25, 0.0, 0.0],
        [0.08, 0.0, 0.0], [-0.08, 0.0, 0.0],
    ])
    return SkeletonSpec(
        parents=parents,
        offsets=offsets,
        feet=(10, 11),
        hands=(22, 23),
        root=(0,),
        names=names,
    )


# ---------------------------------------------------------------------------
# motion sequences

@dataclass(frozen=True)
class MotionSequence:
    """L frames of per-joint rotation-6d plus root translation."""

    fps: int
    frames: np.ndarray  # [L, J*6 + 3]

    def __post_init__(self):
        arr = np.array(self.frames, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 2:
            raise ValueError(f"frames must be [L >= 2, width], got {arr.shape}")
        if (arr.shape[1] - 3) % 6 != 0:
            raise ValueError(f"frame width {arr.shape[1]} is not J*6 + 3")
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite motion frames")
        if int(self.fps) not in VALID_FPS:
            raise ValueError(f"fps must be one of {VALID_FPS}, got {self.fps}")
        arr.setflags(write=False)
        object.__setattr__(self, "frames", arr)
        object.__setattr__(self, "fps", int(self.fps))

    @property
    def length(self) -> int:
        return self.frames.shape[0]

    @property
    def joint_count(self) -> int:
        return (self.frames.shape[1] - 3) // 6

    @property
    def duration(self) -> float:
        return self.length / self.fps


@dataclass(frozen=True)
class BeatGrid:
    """Ordered beat timestamps (seconds) over a clip of known duration."""

    timestamps: np.ndarray
    duration: float

    def __post_init__(self):
        ts = np.array(self.timestamps, dtype=np.float64).reshape(-1)
        if ts.size and (np.any(np.diff(ts) <= 0.0)):
            raise ValueError("beat timestamps must be strictly increasing")
        if ts.size and (ts[0] < 0.0 or ts[-1] > self.duration + 1e-12):
            raise ValueError("beat timestamps must lie within [0, duration]")
        ts.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "duration", float(self.duration))

    def __len__(self) -> int:
        return self.timestamps.size


# ---------------------------------------------------------------------------
# rotation-6d <-> matrix

def rot6d_to_matrix(v) -> np.ndarray:
    """Recover rotation matrices from 6d vectors ([..., 6] -> [..., 3, 3]).

    The 6 numbers are the first two matrix columns; Gram-Schmidt rebuilds an
    orthonormal right-handed frame. Zero or parallel columns are rejected.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != 6:
        raise ValueError(f"rot6d vectors need 6 channels, got {v.shape}")
    a, b = v[..., 0:3], v[..., 3:6]
    na = np.linalg.norm(a, axis=-1, keepdims=True)
    if np.any(na < _DEGENERATE_EPS):
        raise ValueError("degenerate rot6d input: first column has (near-)zero norm")
    c1 = a / na
    b_perp = b - np.sum(c1 * b, axis=-1, keepdims=True) * c1
    nb = np.linalg.norm(b_perp, axis=-1, keepdims=True)
    if np.any(nb < _DEGENERATE_EPS):
        raise ValueError("degenerate rot6d input: columns are (near-)parallel")
    c2 = b_perp / nb
    c3 = np.cross(c1, c2)
    return np.stack([c1, c2, c3], axis=-1)


def matrix_to_rot6d(mat, tol: float = 1e-6) -> np.ndarray:
    """First two columns of a rotation matrix ([..., 3, 3] -> [..., 6])."""
    mat = np.asarray(mat, dtype=np.float64)
    if mat.shape[-2:] != (3, 3):
        raise ValueError(f"expected [..., 3, 3], got {mat.shape}")
    eye = np.eye(3)
    err = np.abs(np.swapaxes(mat, -1, -2) @ mat - eye).max()
    if err > tol:
        raise ValueError(f"input is not orthonormal (|R^T R - I| = {err:.3g})")
    if np.any(np.linalg.det(mat) < 0.0):
        raise ValueError("input has negative determinant (not a rotation)")
    return np.concatenate([mat[..., :, 0], mat[..., :, 1]], axis=-1)


def identity_rot6d() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])


def _cross_t(a: Tensor, b: Tensor) -> Tensor:
    ax, ay, az = (ops.slice_axis(a, -1, i, i + 1) for i in range(3))
    bx, by, bz = (ops.slice_axis(b, -1, i, i + 1) for i in range(3))
    return ops.concat([ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx], axis=-1)


def rot6d_to_matrix_t(v: Tensor) -> Tensor:
    """Differentiable Gram-Schmidt ([..., 6] tensor -> [..., 3, 3] tensor).

    Norms are clamped at a tiny floor so mid-training predictions far off
    the rotation manifold stay finite; for valid inputs this is bit-equal
    to the strict numpy path.
    """
    a = ops.slice_axis(v, -1, 0, 3)
    b = ops.slice_axis(v, -1, 3, 6)
    na = ops.sqrt(ops.clamp_min(ops.sum_sq(a, axis=-1, keepdims=True), _DEGENERATE_EPS**2))
    c1 = a / na
    b_perp = b - ops.sum(c1 * b, axis=-1, keepdims=True) * c1
    nb = ops.sqrt(ops.clamp_min(ops.sum_sq(b_perp, axis=-1, keepdims=True), _DEGENERATE_EPS**2))
    c2 = b_perp / nb
    c3 = _cross_t(c1, c2)
    cols = [ops.reshape(c, c.shape + (1,)) for c in (c1, c2, c3)]
    return ops.concat(cols, axis=-1)


# ---------------------------------------------------------------------------
# forward kinematics

class FkResult(NamedTuple):
    positions: Tensor  # [..., J, 3]
    root_rot: Tensor  # [..., 3, 3] global root rotation per frame


def fk_t(skel: SkeletonSpec, frames: Tensor) -> FkResult:
    """FK over a batch of frames ([..., J*6+3] -> positions [..., J, 3]).

    Root position equals the root translation channels; every child sits at
    ``parent_position + parent_global_rotation @ bone_offset``.
    """
    width = frames.shape[-1]
    if width != skel.frame_width:
        raise ValueError(f"frame width {width} != skeleton width {skel.frame_width}")
    j_count = skel.joint_count
    rots = []
    for j in range(j_count):
        v = ops.slice_axis(frames, -1, j * 6, j * 6 + 6)
        rots.append(rot6d_to_matrix_t(v))
    root_pos = ops.slice_axis(frames, -1, j_count * 6, j_count * 6 + 3)

    globals_: list[Tensor] = [rots[0]]
    positions: list[Tensor] = [root_pos]
    for j in range(1, j_count):
        p = skel.parents[j]
        off = Tensor(skel.offsets[j].reshape(3, 1))
        step = ops.reshape(ops.matmul(globals_[p], off), root_pos.shape)
        positions.append(positions[p] + step)
        globals_.append(ops.matmul(globals_[p], rots[j]))
    stacked = ops.concat(
        [ops.reshape(p, p.shape[:-1] + (1, 3)) for p in positions], axis=-2
    )
    return FkResult(positions=stacked, root_rot=rots[0])


def forward_kinematics(skel: SkeletonSpec, frame) -> np.ndarray:
    """Joint positions for a single motion frame ([J*6+3] -> [J, 3])."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != (skel.frame_width,):
        raise ValueError(f"malformed frame: shape {frame.shape}, want ({skel.frame_width},)")
    # run the strict converter first so degenerate rotations are rejected
    rot6d_to_matrix(frame[: skel.joint_count * 6].reshape(skel.joint_count, 6))
    return fk_t(skel, Tensor(frame)).positions.data


def fk_positions(skel: SkeletonSpec, frames: np.ndarray) -> np.ndarray:
    """Vectorized FK for an [L, width] frame array -> [L, J, 3]."""
    return fk_t(skel, Tensor(frames)).positions.data


# ---------------------------------------------------------------------------
# velocities

def forward_diff_t(x: Tensor, fps: float, axis: int = 0) -> Tensor:
    """Forward differences scaled by fps; the last step repeats the previous."""
    n = x.shape[axis]
    if n < 2:
        raise ValueError("need at least 2 frames for velocities")
    lead = ops.slice_axis(x, axis, 1, n)
    lag = ops.slice_axis(x, axis, 0, n - 1)
    d = (lead - lag) * float(fps)
    last = ops.slice_axis(d, axis, n - 2, n - 1)
    return ops.concat([d, last], axis=axis)


class Velocities(NamedTuple):
    pos: np.ndarray  # [L, J-1, 3] root-relative linear velocities (non-root joints)
    rot: np.ndarray  # [L, J, 6] rotation-6d channel velocities (root included)


def compute_velocities(seq: MotionSequence, skel: SkeletonSpec) -> Velocities:
    """Per-frame joint velocities.

    Linear velocities are differences of root-relative positions (so the
    root's own translation drops out and its linear velocity is excluded);
    rotation velocities are channel differences of the 6d representation.
    Both use forward differences scaled by fps, last frame duplicated.
    """
    pos = fk_positions(skel, seq.frames)  # [L, J, 3]
    rel = pos[:, 1:, :] - pos[:, :1, :]
    pos_vel = forward_diff_t(Tensor(rel), seq.fps).data
    rot = seq.frames[:, : skel.joint_count * 6].reshape(seq.length, skel.joint_count, 6)
    rot_vel = forward_diff_t(Tensor(rot), seq.fps).data
    return Velocities(pos=pos_vel, rot=rot_vel)


# ---------------------------------------------------------------------------
# temporal resampling

def downsample(seq: MotionSequence, target_fps: int) -> MotionSequence:
    """Keep every k-th frame; the fps ratio must be an integer."""
    if seq.fps % target_fps != 0:
        raise ValueError(f"non-integer downsample ratio {seq.fps}/{target_fps}")
    k = seq.fps // target_fps
    return MotionSequence(fps=target_fps, frames=seq.frames[::k])


def upsample_linear(seq: MotionSequence, target_fps: int) -> MotionSequence:
    """Linearly interpolate all channels up to ``target_fps``.

    Output has exactly ``L * k`` frames with the originals preserved
    bit-exactly at indices ``k*i``; the tail past the last original frame
    continues the final segment's slope (so globally-linear channels
    survive a down/up round trip).
    """
    if target_fps % seq.fps != 0:
        raise ValueError(f"non-integer upsample ratio {target_fps}/{seq.fps}")
    k = target_fps // seq.fps
    if k == 1:
        return MotionSequence(fps=target_fps, frames=seq.frames)
    frames = seq.frames
    length = frames.shape[0]
    out = np.empty((length * k, frames.shape[1]))
    slopes = np.empty_like(frames)
    slopes[:-1] = frames[1:] - frames[:-1]
    slopes[-1] = slopes[-2]  # extrapolate the tail
    for r in range(k):
        if r == 0:
            out[0::k] = frames
        else:
            out[r::k] = frames + slopes * (r / k)
    return MotionSequence(fps=target_fps, frames=out)
