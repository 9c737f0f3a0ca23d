"""Training objective: reconstruction plus geometric regularizers.

Terms, all differentiable end-to-end through forward kinematics:

* ``simple``  - mean squared error on raw frame channels.
* ``pos_all`` - MSE over all joints' absolute FK positions plus MSE over
  root-relative linear velocities (root's own linear velocity excluded).
* ``pos_key`` - squared position/velocity error of feet and hands, measured
  in the root's local frame (summed over tagged joints, averaged over
  frames). Using the root-local frame makes this term insensitive to root
  rotation, which the rotation term below handles explicitly.
* ``rot_key`` - squared rotation-6d channel and channel-velocity error of
  feet, hands, and the root.

The geometric terms are scaled by a decay weight ``1 - alpha * t / T`` so
they bind hardest at small diffusion timesteps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .motion import SkeletonSpec, fk_t, forward_diff_t
from .tensor import Tensor


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0  # all-joints position loss
    lambda2: float = 1.0  # key-joint position loss
    lambda3: float = 1.0  # key-joint rotation loss
    alpha: float = 0.1  # decay coefficient for the dynamic weight

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3, self.alpha) < 0.0:
            raise ValueError("loss weights must be >= 0")
        if self.alpha > 1.0:
            raise ValueError("alpha must be <= 1")


@dataclass(frozen=True)
class LossBreakdown:
    simple: float
    pos_all: float
    pos_key: float
    rot_key: float
    lambda_t: float
    total: float

    FIELDS = ("simple", "pos_all", "pos_key", "rot_key", "lambda_t", "total")


def dynamic_weight(t, T: int, alpha: float):
    """Geometric-loss decay ``1 - alpha * t / T`` (exact at both endpoints)."""
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0) or np.any(t_arr > T):
        raise ValueError(f"t={t} outside [0, {T}]")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha={alpha} outside [0, 1]")
    out = 1.0 - alpha * (t_arr / T)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# tensor-domain cores (batched; gradients flow through ``pred``)

def _as_batch(x) -> Tensor:
    x = ops.as_tensor(x)
    if x.ndim == 2:
        x = ops.reshape(x, (1,) + x.shape)
    if x.ndim != 3:
        raise ValueError(f"expected [L, W] or [B, L, W], got {x.shape}")
    return x


def simple_loss_t(pred, gt) -> Tensor:
    """Per-element MSE over frames and channels, [B]."""
    pred, gt = _as_batch(pred), _as_batch(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    d = pred - gt
    return ops.mean(d * d, axis=(1, 2))


def _fk_pair(pred: Tensor, gt: Tensor, skel: SkeletonSpec, gt_fk=None):
    """FK of both sides; ``gt_fk`` short-circuits the (constant) truth side."""
    from .motion import FkResult

    fp = fk_t(skel, pred)
    if gt_fk is None:
        fg = fk_t(skel, gt)
    else:
        fg = FkResult(positions=ops.as_tensor(gt_fk[0]), root_rot=ops.as_tensor(gt_fk[1]))
    return fp, fg


def _pos_all_from_fk(fp, fg, joint_count: int, fps: float) -> Tensor:
    dpos = fp.positions - fg.positions
    pos_term = ops.mean(dpos * dpos, axis=(1, 2, 3))
    rel_p = ops.slice_axis(fp.positions, 2, 1, joint_count) - ops.slice_axis(
        fp.positions, 2, 0, 1
    )
    rel_g = ops.slice_axis(fg.positions, 2, 1, joint_count) - ops.slice_axis(
        fg.positions, 2, 0, 1
    )
    dvel = forward_diff_t(rel_p, fps, axis=1) - forward_diff_t(rel_g, fps, axis=1)
    vel_term = ops.mean(dvel * dvel, axis=(1, 2, 3))
    return pos_term + vel_term


def pos_all_loss_t(pred, gt, skel: SkeletonSpec, fps: float, gt_fk=None) -> Tensor:
    """Absolute-position MSE plus root-relative velocity MSE, [B]."""
    pred, gt = _as_batch(pred), _as_batch(gt)
    fp, fg = _fk_pair(pred, gt, skel, gt_fk)
    return _pos_all_from_fk(fp, fg, skel.joint_count, fps)


def _root_local(fk_res) -> Tensor:
    """Joint positions expressed in the root's frame, [B, L, J, 3]."""
    rel = fk_res.positions - ops.slice_axis(fk_res.positions, 2, 0, 1)
    return ops.matmul(rel, fk_res.root_rot)


def _gather_joints(x: Tensor, indices, axis: int) -> Tensor:
    parts = [ops.slice_axis(x, axis, k, k + 1) for k in indices]
    return ops.concat(parts, axis=axis)


def _pos_key_from_fk(fp, fg, skel: SkeletonSpec, fps: float) -> Tensor:
    tagged = tuple(skel.feet) + tuple(skel.hands)
    loc_p = _gather_joints(_root_local(fp), tagged, 2)
    loc_g = _gather_joints(_root_local(fg), tagged, 2)
    dpos = loc_p - loc_g
    pos_term = ops.mean(ops.sum_sq(dpos, axis=(2, 3)), axis=1)
    dvel = forward_diff_t(loc_p, fps, axis=1) - forward_diff_t(loc_g, fps, axis=1)
    vel_term = ops.mean(ops.sum_sq(dvel, axis=(2, 3)), axis=1)
    return pos_term + vel_term


def pos_key_loss_t(pred, gt, skel: SkeletonSpec, fps: float, gt_fk=None) -> Tensor:
    """Key-joint (feet, hands) position + velocity error in the root frame, [B].

    Summed over tagged joints and their xyz channels, averaged over frames.
    """
    if not skel.feet or not skel.hands:
        raise ValueError("skeleton is missing foot/hand key tags")
    pred, gt = _as_batch(pred), _as_batch(gt)
    fp, fg = _fk_pair(pred, gt, skel, gt_fk)
    return _pos_key_from_fk(fp, fg, skel, fps)


def rot_key_loss_t(pred, gt, skel: SkeletonSpec, fps: float) -> Tensor:
    """Key-joint rotation-channel + channel-velocity error, root included, [B]."""
    if not skel.feet or not skel.hands:
        raise ValueError("skeleton is missing foot/hand key tags")
    pred, gt = _as_batch(pred), _as_batch(gt)
    tagged = tuple(skel.root) + tuple(skel.feet) + tuple(skel.hands)

    def channels(x):
        parts = [ops.slice_axis(x, -1, k * 6, k * 6 + 6) for k in tagged]
        return ops.concat(parts, axis=-1)

    ch_p, ch_g = channels(pred), channels(gt)
    drot = ch_p - ch_g
    rot_term = ops.mean(ops.sum_sq(drot, axis=-1), axis=1)
    dvel = forward_diff_t(ch_p, fps, axis=1) - forward_diff_t(ch_g, fps, axis=1)
    vel_term = ops.mean(ops.sum_sq(dvel, axis=-1), axis=1)
    return rot_term + vel_term


def combined_loss_t(
    pred,
    gt,
    t,
    T: int,
    weights: LossWeights,
    skel: SkeletonSpec,
    fps: float,
    gt_fk=None,
):
    """Full objective over a batch.

    Returns ``(total, parts)`` where ``total`` is the scalar batch-mean loss
    tensor and ``parts`` maps term names to per-element numpy values.
    ``gt_fk`` optionally supplies precomputed (positions, root_rot) arrays
    for the ground-truth side.
    """
    pred, gt = _as_batch(pred), _as_batch(gt)
    t_arr = np.atleast_1d(np.asarray(t, dtype=np.int64))
    lam = np.atleast_1d(dynamic_weight(t_arr, T, weights.alpha))

    simple = simple_loss_t(pred, gt)
    geo_zero = weights.lambda1 == weights.lambda2 == weights.lambda3 == 0.0
    if geo_zero:
        zeros = Tensor(np.zeros(pred.shape[0]))
        pos_all = pos_key = rot_key = zeros
    else:
        fp, fg = _fk_pair(pred, gt, skel, gt_fk)  # FK once, shared by both terms
        pos_all = _pos_all_from_fk(fp, fg, skel.joint_count, fps)
        pos_key = _pos_key_from_fk(fp, fg, skel, fps)
        rot_key = rot_key_loss_t(pred, gt, skel, fps)
    geo = (
        weights.lambda1 * pos_all + weights.lambda2 * pos_key + weights.lambda3 * rot_key
    )
    per_elem = simple + Tensor(lam) * geo
    total = ops.mean(per_elem)
    parts = {
        "simple": simple.data.copy(),
        "pos_all": pos_all.data.copy(),
        "pos_key": pos_key.data.copy(),
        "rot_key": rot_key.data.copy(),
        "lambda_t": lam.copy(),
        "total": per_elem.data.copy(),
    }
    return total, parts


# ---------------------------------------------------------------------------
# single-sequence numpy front ends

def _check_pair(pred: np.ndarray, gt: np.ndarray) -> None:
    if np.shape(pred) != np.shape(gt):
        raise ValueError(f"shape mismatch {np.shape(pred)} vs {np.shape(gt)}")


def loss_simple(x0_pred: np.ndarray, x0: np.ndarray) -> float:
    _check_pair(x0_pred, x0)
    return float(simple_loss_t(x0_pred, x0).data[0])


def loss_pos_all(pred, gt, skel: SkeletonSpec, fps: float = 60.0) -> float:
    _check_pair(pred, gt)
    return float(pos_all_loss_t(pred, gt, skel, fps).data[0])


def loss_pos_key(pred, gt, skel: SkeletonSpec, fps: float = 60.0) -> float:
    _check_pair(pred, gt)
    return float(pos_key_loss_t(pred, gt, skel, fps).data[0])


def loss_rot_key(pred, gt, skel: SkeletonSpec, fps: float = 60.0) -> float:
    _check_pair(pred, gt)
    return float(rot_key_loss_t(pred, gt, skel, fps).data[0])


def total_loss(
    x0_pred,
    x0,
    t: int,
    weights: LossWeights,
    skel: SkeletonSpec,
    T: int = 1000,
    fps: float = 60.0,
) -> LossBreakdown:
    """Single-sequence loss breakdown satisfying
    ``total = simple + lambda_t * (l1*pos_all + l2*pos_key + l3*rot_key)``.
    """
    _check_pair(x0_pred, x0)
    total, parts = combined_loss_t(x0_pred, x0, t, T, weights, skel, fps)
    return LossBreakdown(
        simple=float(parts["simple"][0]),
        pos_all=float(parts["pos_all"][0]),
        pos_key=float(parts["pos_key"][0]),
        rot_key=float(parts["rot_key"][0]),
        lambda_t=float(parts["lambda_t"][0]),
        total=float(total.data),
    )
