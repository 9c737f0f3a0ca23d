"""Noise schedules, forward process, and guided reverse sampling.

The denoiser predicts the clean sample ``x0`` directly; each reverse step
re-expresses the standard forward-posterior mean ``q(x_prev | x_t, x0)``
around that prediction. Reverse-step noise defaults to a standard deviation
of ``beta_t`` (the variance convention used by the source framework), with
``sigma_mode`` switches for the conventional posterior std and for fully
deterministic sampling.

Inference may run on an evenly strided subsequence of the training
timesteps; all formulas below use the effective per-jump quantities
``alpha_bar[t] / alpha_bar[t_prev]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rng import SplitMix64

SIGMA_MODES = ("beta", "posterior", "none")


@dataclass(frozen=True)
class NoiseSchedule:
    """Variance schedule arrays indexed 0..T (index 0 is the no-noise sentinel)."""

    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    kind: str = "cosine"

    def __post_init__(self):
        for name in ("beta", "alpha", "alpha_bar"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if len(self.beta) != self.T + 1:
            raise ValueError("schedule arrays must have length T + 1")


def build_schedule(T: int, kind: str = "cosine") -> NoiseSchedule:
    """Build a noise schedule with 0 < beta_t < 1 and alpha_bar[T] < 1e-3.

    ``linear`` ramps beta over [1e-4, 0.02] scaled by 1000/T so the terminal
    noise level is T-independent; ``cosine`` is the squared-cosine alpha_bar
    profile with the usual 0.008 offset. Betas are clipped to [1e-8, 0.999].
    """
    if T < 2:
        raise ValueError(f"schedule needs T >= 2, got {T}")
    if kind == "linear":
        scale = 1000.0 / T
        beta = np.linspace(scale * 1e-4, scale * 0.02, T)
    elif kind == "cosine":
        s = 0.008
        steps = np.arange(T + 1) / T
        f = np.cos((steps + s) / (1.0 + s) * math.pi / 2.0) ** 2
        abar = f / f[0]
        beta = 1.0 - abar[1:] / abar[:-1]
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")
    beta = np.clip(beta, 1e-8, 0.999)
    beta = np.concatenate([[0.0], beta])
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    if not np.all(np.diff(beta[1:]) >= -1e-12):
        raise AssertionError("beta schedule is not nondecreasing")
    if not np.all(np.diff(alpha_bar) < 0.0):
        raise AssertionError("alpha_bar is not strictly decreasing")
    if alpha_bar[-1] >= 1e-3:
        raise AssertionError(f"alpha_bar[T] = {alpha_bar[-1]:.3g} >= 1e-3")
    return NoiseSchedule(T=T, beta=beta, alpha=alpha, alpha_bar=alpha_bar, kind=kind)


def _check_t(t, T: int) -> np.ndarray:
    t = np.asarray(t, dtype=np.int64)
    if np.any(t < 1) or np.any(t > T):
        raise ValueError(f"timestep {t} outside [1, {T}]")
    return t


def q_sample(x0: np.ndarray, t, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Closed-form forward marginal: sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.

    ``t`` may be a scalar or a vector indexing the leading axis of ``x0``.
    """
    t = _check_t(t, sched.T)
    abar = sched.alpha_bar[t]
    if abar.ndim > 0:
        abar = abar.reshape(abar.shape + (1,) * (x0.ndim - abar.ndim))
    return np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * eps


def posterior_mean(
    x0_pred: np.ndarray, x_t: np.ndarray, t: int, sched: NoiseSchedule, t_prev: int | None = None
) -> np.ndarray:
    """Mean of q(x_prev | x_t, x0) expressed from the predicted x0."""
    t = int(_check_t(t, sched.T))
    t_prev = t - 1 if t_prev is None else int(t_prev)
    if not 0 <= t_prev < t:
        raise ValueError(f"t_prev {t_prev} must lie in [0, {t})")
    if t_prev == 0:
        return x0_pred
    abar_t = sched.alpha_bar[t]
    abar_p = sched.alpha_bar[t_prev]
    beta_eff = 1.0 - abar_t / abar_p
    coef0 = np.sqrt(abar_p) * beta_eff / (1.0 - abar_t)
    coeft = np.sqrt(abar_t / abar_p) * (1.0 - abar_p) / (1.0 - abar_t)
    return coef0 * x0_pred + coeft * x_t


def p_sample_step(
    x0_pred: np.ndarray,
    x_t: np.ndarray,
    t: int,
    sched: NoiseSchedule,
    rng: SplitMix64,
    t_prev: int | None = None,
    sigma_mode: str = "beta",
) -> np.ndarray:
    """One reverse step x_t -> x_prev; no noise is added on the final step."""
    if sigma_mode not in SIGMA_MODES:
        raise ValueError(f"sigma_mode must be one of {SIGMA_MODES}")
    t = int(_check_t(t, sched.T))
    t_prev = t - 1 if t_prev is None else int(t_prev)
    mean = posterior_mean(x0_pred, x_t, t, sched, t_prev)
    if t_prev == 0 or sigma_mode == "none":
        return mean
    abar_t = sched.alpha_bar[t]
    abar_p = sched.alpha_bar[t_prev]
    beta_eff = 1.0 - abar_t / abar_p
    if sigma_mode == "beta":
        sigma = beta_eff
    else:  # conventional posterior std
        sigma = np.sqrt(beta_eff * (1.0 - abar_p) / (1.0 - abar_t))
    return mean + sigma * rng.normal(size=x_t.shape)


def cfg_combine(pred_cond: np.ndarray, pred_uncond: np.ndarray, w: float) -> np.ndarray:
    """Classifier-free guidance: w * cond + (1 - w) * uncond.

    Computed as ``uncond + w * (cond - uncond)`` so identical predictions
    pass through bit-exactly for any w; w=1 and w=0 short-circuit.
    """
    if pred_cond.shape != pred_uncond.shape:
        raise ValueError("prediction shapes disagree")
    if w == 1.0:
        return pred_cond
    if w == 0.0:
        return pred_uncond
    return pred_uncond + w * (pred_cond - pred_uncond)


def condition_dropout(c, p: float, rng: SplitMix64):
    """Return ``c`` or None (the model substitutes its learned null token).

    None is produced with probability ``p``; drawing happens even at the
    endpoints so RNG stream consumption does not depend on ``p``.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"dropout probability {p} outside [0, 1]")
    return None if rng.uniform() < p else c


def conditioning_augment(
    x_low: np.ndarray, s: int, sched: NoiseSchedule, rng: SplitMix64, s_max: int | None = None
) -> np.ndarray:
    """Corrupt the low-resolution conditioning at noise level ``s``.

    ``s = 0`` is the exact identity; otherwise this is the forward marginal
    at step ``s``.
    """
    s_max = sched.T if s_max is None else int(s_max)
    if not 0 <= s <= s_max:
        raise ValueError(f"augmentation step {s} outside [0, {s_max}]")
    if s == 0:
        return x_low
    return q_sample(x_low, s, rng.normal(size=x_low.shape), sched)


def inference_timesteps(T: int, n_steps: int) -> list[tuple[int, int]]:
    """Evenly strided descending (t, t_prev) pairs ending at (t_min, 0)."""
    if not 1 <= n_steps <= T:
        raise ValueError(f"inference steps {n_steps} outside [1, {T}]")
    ts = np.unique(np.round(np.linspace(0, T, n_steps + 1)).astype(int))
    ts = ts[ts > 0]
    pairs = []
    prev = np.concatenate([[0], ts[:-1]])
    for t, tp in zip(ts[::-1], prev[::-1]):
        pairs.append((int(t), int(tp)))
    return pairs


@dataclass
class SamplerConfig:
    guidance_weight: float = 2.5
    inference_steps: int = 100
    seed: int = 0
    sigma_mode: str = "beta"
    seed_frames: np.ndarray | None = None  # model-space prefix to inpaint
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.guidance_weight < 0.0:
            raise ValueError("guidance weight must be >= 0")
        if self.sigma_mode not in SIGMA_MODES:
            raise ValueError(f"sigma_mode must be one of {SIGMA_MODES}")


def sample_loop(
    model,
    cond,
    config: SamplerConfig,
    sched: NoiseSchedule,
    shape: tuple[int, int],
    rng: SplitMix64 | None = None,
) -> np.ndarray:
    """Run the reverse process from pure noise.

    ``model(x_t, t, cond_or_None) -> x0_pred``. When ``seed_frames`` is set,
    the prefix region of ``x_t`` is overwritten with the noised seed before
    every model call (replacement-style inpainting) and with the clean seed
    after the final step.
    """
    if config.inference_steps > sched.T:
        raise ValueError("inference_steps exceeds schedule length")
    rng = SplitMix64(config.seed) if rng is None else rng
    seed_frames = config.seed_frames
    if seed_frames is not None:
        seed_frames = np.asarray(seed_frames, dtype=np.float64)
        if seed_frames.shape[0] > shape[0] or seed_frames.shape[1] != shape[1]:
            raise ValueError("seed prefix does not fit the requested shape")
    x = rng.normal(size=shape)
    w = config.guidance_weight
    for t, t_prev in inference_timesteps(sched.T, config.inference_steps):
        if seed_frames is not None:
            n = seed_frames.shape[0]
            noised = q_sample(seed_frames, t, rng.normal(size=seed_frames.shape), sched)
            x = np.concatenate([noised, x[n:]], axis=0)
        pred_cond = model(x, t, cond)
        if pred_cond.shape != x.shape:
            raise ValueError(f"model output shape {pred_cond.shape} != {x.shape}")
        if w != 1.0:
            pred_uncond = model(x, t, None)
            x0_pred = cfg_combine(pred_cond, pred_uncond, w)
        else:
            x0_pred = pred_cond
        x = p_sample_step(x0_pred, x, t, sched, rng, t_prev=t_prev, sigma_mode=config.sigma_mode)
    if seed_frames is not None:
        x = np.concatenate([seed_frames, x[seed_frames.shape[0]:]], axis=0)
    return x
