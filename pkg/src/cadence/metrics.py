"""Evaluation stack: motion features, Fréchet distance, diversity, rhythm.

Kinetic and geometric features are desk-scale reconstructions in the spirit
of the usual motion-quality feature sets (per-joint velocity statistics and
boolean pose-descriptor rates); absolute Fréchet values are therefore only
comparable within this codebase.

Dance beats are the strict local minima of the smoothed kinetic velocity
(sum of root-relative joint speeds). The beat alignment score averages a
Gaussian kernel of each music beat's distance to its nearest dance beat.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.spatial.distance import pdist

from .motion import BeatGrid, MotionSequence, SkeletonSpec, compute_velocities

BAS_SIGMA_SECONDS = 3.0 / 60.0  # 3 frames at the 60 fps reference rate
_SMOOTH_WINDOW = 5
_HAND_RAISE_MARGIN = 0.05  # meters above the rest height, root-relative
_FOOT_LIFT_MARGIN = 0.05
_HANDS_CLOSE_FRACTION = 0.5


# ---------------------------------------------------------------------------
# features

def kinetic_features(seq: MotionSequence, skel: SkeletonSpec) -> np.ndarray:
    """Per-joint velocity/acceleration statistics, length 3*J.

    Blocks: mean squared speed, mean squared acceleration, mean speed. The
    root has no linear velocity (root-relative convention) so its slots are
    zero.
    """
    if seq.length < 3:
        raise ValueError("kinetic features need at least 3 frames")
    vel = compute_velocities(seq, skel).pos  # [L, J-1, 3]
    acc = np.diff(vel, axis=0) * seq.fps
    speed_sq = (vel * vel).sum(axis=-1)
    acc_sq = (acc * acc).sum(axis=-1)
    j = skel.joint_count
    out = np.zeros(3 * j)
    out[1:j] = speed_sq.mean(axis=0)
    out[j + 1 : 2 * j] = acc_sq.mean(axis=0)
    out[2 * j + 1 :] = np.sqrt(speed_sq).mean(axis=0)
    return out


def geometric_features(seq: MotionSequence, skel: SkeletonSpec) -> np.ndarray:
    """Boolean pose-descriptor activation rates, each in [0, 1].

    Descriptors: per hand raised above its rest height (root-relative), per
    foot lifted above its rest height, and both lead hands closer than half
    their rest separation. Thresholds are fixed by the skeleton's rest pose.
    """
    from .motion import fk_positions

    pos = fk_positions(skel, seq.frames)  # [L, J, 3]
    rel_y = pos[:, :, 1] - pos[:, :1, 1]
    rest = skel.rest_positions()
    rest_rel_y = rest[:, 1] - rest[0, 1]
    rates = []
    for h in skel.hands:
        rates.append(np.mean(rel_y[:, h] > rest_rel_y[h] + _HAND_RAISE_MARGIN))
    for f in skel.feet:
        rates.append(np.mean(rel_y[:, f] > rest_rel_y[f] + _FOOT_LIFT_MARGIN))
    if len(skel.hands) >= 2:
        a, b = skel.hands[0], skel.hands[1]
        rest_dist = np.linalg.norm(rest[a] - rest[b])
        dist = np.linalg.norm(pos[:, a] - pos[:, b], axis=-1)
        rates.append(np.mean(dist < _HANDS_CLOSE_FRACTION * rest_dist))
    else:
        rates.append(0.0)
    return np.asarray(rates, dtype=np.float64)


# ---------------------------------------------------------------------------
# distribution distances

@dataclass(frozen=True)
class GaussianStats:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        cov = np.asarray(self.cov, dtype=np.float64)
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"cov shape {cov.shape} != ({mean.size}, {mean.size})")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


def gaussian_stats(features: np.ndarray) -> GaussianStats:
    """Mean/covariance of an [N, D] feature stack (sample covariance)."""
    feats = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if feats.shape[0] < 2:
        raise ValueError("need at least 2 feature vectors for covariance")
    return GaussianStats(mean=feats.mean(axis=0), cov=np.cov(feats, rowvar=False).reshape(
        feats.shape[1], feats.shape[1]
    ))


def _sym_sqrt(mat: np.ndarray, clamp: float = -1e-10) -> np.ndarray:
    sym = 0.5 * (mat + mat.T)
    vals, vecs = np.linalg.eigh(sym)
    if vals.min() < clamp * max(1.0, abs(vals.max())):
        raise FloatingPointError(
            f"matrix square root failed: eigenvalue {vals.min():.3g} below clamp"
        )
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2))."""
    if a.mean.size != b.mean.size:
        raise ValueError("dimension mismatch between feature statistics")
    diff = a.mean - b.mean
    root_a = _sym_sqrt(a.cov)
    cross = _sym_sqrt(root_a @ b.cov @ root_a)
    return float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * np.trace(cross))


def diversity(features: np.ndarray) -> float:
    """Mean Euclidean distance over all unordered feature pairs."""
    feats = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if feats.shape[0] < 2:
        raise ValueError("diversity needs at least 2 feature vectors")
    return float(pdist(feats).mean())


# ---------------------------------------------------------------------------
# rhythm

def kinetic_velocity(seq: MotionSequence, skel: SkeletonSpec, smoothed: bool = True) -> np.ndarray:
    """Per-frame sum of joint speeds, optionally 5-frame moving-averaged."""
    vel = compute_velocities(seq, skel).pos
    k = np.linalg.norm(vel, axis=-1).sum(axis=-1)
    if not smoothed:
        return k
    pad = np.pad(k, _SMOOTH_WINDOW // 2, mode="edge")
    return np.convolve(pad, np.ones(_SMOOTH_WINDOW) / _SMOOTH_WINDOW, mode="valid")


def extract_dance_beats(seq: MotionSequence, skel: SkeletonSpec) -> BeatGrid:
    """Strict local minima of the smoothed kinetic velocity, as timestamps."""
    if seq.length < 3:
        raise ValueError("beat extraction needs at least 3 frames")
    k = kinetic_velocity(seq, skel)
    interior = (k[1:-1] < k[:-2]) & (k[1:-1] < k[2:])
    frames = np.flatnonzero(interior) + 1
    return BeatGrid(timestamps=frames / seq.fps, duration=seq.length / seq.fps)


def beat_align_score(
    dance: BeatGrid, music: BeatGrid, sigma: float = BAS_SIGMA_SECONDS
) -> float:
    """Mean Gaussian kernel of music-beat -> nearest-dance-beat distances.

    ``sigma`` is in seconds (the default is 3 frames at 60 fps). An empty
    dance grid scores 0; an empty music grid is an error.
    """
    if len(music) == 0:
        raise ValueError("music beat grid is empty")
    if len(dance) == 0:
        return 0.0
    d = np.abs(music.timestamps[:, None] - dance.timestamps[None, :]).min(axis=1)
    return float(np.mean(np.exp(-(d * d) / (2.0 * sigma * sigma))))


# ---------------------------------------------------------------------------
# suite

class EvalClip(NamedTuple):
    motion: MotionSequence
    music_beats: BeatGrid | None = None


def evaluate_suite(
    generated: Sequence[EvalClip],
    reference: Sequence[EvalClip],
    skel: SkeletonSpec,
    sigma: float = BAS_SIGMA_SECONDS,
) -> dict:
    """Full metric report between generated and reference clip sets.

    Returns the documented JSON schema:
    ``{"fid_k", "fid_g", "div_k", "div_g", "bas", "clips"}``.
    """
    if not generated or not reference:
        raise ValueError("both clip sets must be nonempty")
    gen_kin = np.stack([kinetic_features(c.motion, skel) for c in generated])
    ref_kin = np.stack([kinetic_features(c.motion, skel) for c in reference])
    gen_geo = np.stack([geometric_features(c.motion, skel) for c in generated])
    ref_geo = np.stack([geometric_features(c.motion, skel) for c in reference])

    scores = []
    for clip in generated:
        if clip.music_beats is not None and len(clip.music_beats) > 0:
            scores.append(
                beat_align_score(extract_dance_beats(clip.motion, skel), clip.music_beats, sigma)
            )
    if not scores:
        raise ValueError("no generated clip carries a music beat grid")

    return {
        "fid_k": frechet_distance(gaussian_stats(gen_kin), gaussian_stats(ref_kin)),
        "fid_g": frechet_distance(gaussian_stats(gen_geo), gaussian_stats(ref_geo)),
        "div_k": diversity(gen_kin),
        "div_g": diversity(gen_geo),
        "bas": float(np.mean(scores)),
        "clips": len(generated),
    }
