"""Transformer denoisers for both cascade stages.

One architecture serves the base low-FPS model and the super-resolution
model: frame channels are projected to tokens, a single condition token
(projected condition embedding plus the timestep embedding) is prepended,
a pre-LN transformer encoder runs, and frame tokens are projected back to
frame channels. The condition token's output position is discarded.

The super-resolution variant consumes twice the frame channels (noised
frames concatenated with the upsampled low-resolution conditioning) and
offsets its timestep embedding by the augmentation step ``s``.

The final projection is zero-initialized, so an untrained model predicts
the per-channel data mean exactly (via the attached normalizer).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import ops
from .rng import SplitMix64
from .tensor import Tensor


@dataclass(frozen=True)
class DenoiserConfig:
    frame_width: int
    layers: int = 4
    hidden_dim: int = 128
    heads: int = 4
    dropout: float = 0.1
    max_frames: int = 128
    cond_dim: int = 512
    mlp_ratio: int = 4
    ssr: bool = False

    def __post_init__(self):
        if self.hidden_dim % self.heads != 0:
            raise ValueError("hidden_dim must be divisible by heads")
        if self.hidden_dim % 2 != 0 or self.hidden_dim < 8:
            raise ValueError("hidden_dim must be even and >= 8")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    @property
    def input_width(self) -> int:
        return self.frame_width * (2 if self.ssr else 1)

    def to_dict(self) -> dict:
        return {
            "frame_width": self.frame_width,
            "layers": self.layers,
            "hidden_dim": self.hidden_dim,
            "heads": self.heads,
            "dropout": self.dropout,
            "max_frames": self.max_frames,
            "cond_dim": self.cond_dim,
            "mlp_ratio": self.mlp_ratio,
            "ssr": self.ssr,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DenoiserConfig":
        return cls(**d)


def paper_scale_config(frame_width: int, **overrides) -> DenoiserConfig:
    """The full-scale setting: 12 layers, 768 hidden, 6 heads, dropout 0.1."""
    cfg = DenoiserConfig(
        frame_width=frame_width, layers=12, hidden_dim=768, heads=6,
        dropout=0.1, max_frames=1200,
    )
    return replace(cfg, **overrides) if overrides else cfg


def param_shapes(config: DenoiserConfig) -> dict[str, tuple[int, ...]]:
    """Deterministic name -> shape table; init and count both read this."""
    h = config.hidden_dim
    shapes: dict[str, tuple[int, ...]] = {
        "in_proj.w": (config.input_width, h),
        "in_proj.b": (h,),
        "pos_emb": (config.max_frames, h),
        "time_mlp.w1": (h, h),
        "time_mlp.b1": (h,),
        "time_mlp.w2": (h, h),
        "time_mlp.b2": (h,),
        "cond_proj.w": (config.cond_dim, h),
        "cond_proj.b": (h,),
        "null_cond": (config.cond_dim,),
    }
    for i in range(config.layers):
        p = f"blocks.{i}"
        shapes[f"{p}.ln1.g"] = (h,)
        shapes[f"{p}.ln1.b"] = (h,)
        for m in ("q", "k", "v", "o"):
            shapes[f"{p}.attn.w{m}"] = (h, h)
            shapes[f"{p}.attn.b{m}"] = (h,)
        shapes[f"{p}.ln2.g"] = (h,)
        shapes[f"{p}.ln2.b"] = (h,)
        shapes[f"{p}.mlp.w1"] = (h, h * config.mlp_ratio)
        shapes[f"{p}.mlp.b1"] = (h * config.mlp_ratio,)
        shapes[f"{p}.mlp.w2"] = (h * config.mlp_ratio, h)
        shapes[f"{p}.mlp.b2"] = (h,)
    shapes["ln_f.g"] = (h,)
    shapes["ln_f.b"] = (h,)
    shapes["out_proj.w"] = (h, config.frame_width)
    shapes["out_proj.b"] = (config.frame_width,)
    return shapes


def count_params(config: DenoiserConfig) -> int:
    return int(sum(int(np.prod(s)) for s in param_shapes(config).values()))


def init_params(config: DenoiserConfig, seed: int) -> dict[str, np.ndarray]:
    """Xavier-uniform weights, zero biases, unit LN gains.

    The output projection and its bias start at exactly zero, and position /
    null-condition embeddings start small.
    """
    rng = SplitMix64(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(config).items():
        if name in ("out_proj.w", "out_proj.b") or name.endswith(".b") or name.endswith(
            (".bq", ".bk", ".bv", ".bo", ".b1", ".b2")
        ):
            params[name] = np.zeros(shape)
        elif name.endswith(".g"):
            params[name] = np.ones(shape)
        elif name in ("pos_emb", "null_cond"):
            params[name] = 0.02 * rng.normal(size=shape)
        else:
            fan_in, fan_out = shape[0], shape[-1]
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            params[name] = limit * (2.0 * rng.uniform(size=shape) - 1.0)
    return params


def timestep_embedding(t, dim: int) -> np.ndarray:
    """Sinusoidal encoding of integer timesteps, [B] -> [B, dim]."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if np.any(t < 0):
        raise ValueError("timesteps must be >= 0")
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half - 1, 1))
    args = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=-1)


class Denoiser:
    """Parameter bundle plus forward passes for one cascade stage."""

    def __init__(self, config: DenoiserConfig, params: dict[str, np.ndarray],
                 normalizer: "Normalizer | None" = None):
        self.config = config
        self.normalizer = normalizer if normalizer is not None else Normalizer.identity(
            config.frame_width
        )
        self.params: dict[str, Tensor] = {}
        self.set_param_arrays(params)

    @classmethod
    def init(cls, config: DenoiserConfig, seed: int) -> "Denoiser":
        return cls(config, init_params(config, seed))

    def set_param_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        expected = param_shapes(self.config)
        if set(arrays) != set(expected):
            missing = set(expected) ^ set(arrays)
            raise ValueError(f"parameter names disagree: {sorted(missing)}")
        for name, arr in arrays.items():
            if arr.shape != expected[name]:
                raise ValueError(f"{name}: shape {arr.shape} != {expected[name]}")
        self.params = {k: Tensor(v, leaf=True) for k, v in arrays.items()}

    def param_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}

    # -- forward ------------------------------------------------------------

    def embed_timestep(self, t) -> Tensor:
        """Sinusoidal encoding followed by the learned 2-layer MLP, [B, h]."""
        p = self.params
        te = Tensor(timestep_embedding(t, self.config.hidden_dim))
        te = ops.gelu(ops.matmul(te, p["time_mlp.w1"]) + p["time_mlp.b1"])
        return ops.matmul(te, p["time_mlp.w2"]) + p["time_mlp.b2"]

    def _condition_rows(self, cond, null_mask, batch: int) -> Tensor:
        """[B, cond_dim] rows, substituting the learned null embedding."""
        p = self.params
        null_row = ops.reshape(p["null_cond"], (1, self.config.cond_dim))
        if cond is None:
            mask = np.ones((batch, 1))
        else:
            mask = np.zeros((batch, 1)) if null_mask is None else np.asarray(
                null_mask, dtype=np.float64
            ).reshape(batch, 1)
        cond_part = Tensor(np.zeros((batch, self.config.cond_dim))) if cond is None else (
            ops.as_tensor(cond) * Tensor(1.0 - mask)
        )
        return cond_part + null_row * Tensor(mask)

    def forward_batch(self, x, t, cond, null_mask=None, rng: SplitMix64 | None = None) -> Tensor:
        """Denoise a batch: x [B, L, input_width], t [B] -> x0 prediction [B, L, frame_width].

        ``rng`` enables dropout (training); omit it for deterministic
        evaluation. ``null_mask`` selects per-row unconditional behavior.
        """
        cfg = self.config
        x = ops.as_tensor(x)
        if x.ndim != 3 or x.shape[2] != cfg.input_width:
            raise ValueError(f"expected [B, L, {cfg.input_width}], got {x.shape}")
        batch, length = x.shape[0], x.shape[1]
        if length > cfg.max_frames:
            raise ValueError(f"sequence length {length} exceeds max_frames {cfg.max_frames}")
        p = self.params
        pdrop = cfg.dropout if rng is not None else 0.0

        tok = ops.matmul(x, p["in_proj.w"]) + p["in_proj.b"]
        tok = tok + ops.slice_axis(p["pos_emb"], 0, 0, length)
        ctok = self._condition_rows(cond, null_mask, batch)
        ctok = ops.matmul(ctok, p["cond_proj.w"]) + p["cond_proj.b"] + self.embed_timestep(t)
        seq = ops.concat([ops.reshape(ctok, (batch, 1, cfg.hidden_dim)), tok], axis=1)

        for i in range(cfg.layers):
            seq = self._block(seq, i, pdrop, rng)
        seq = ops.layernorm(seq, p["ln_f.g"], p["ln_f.b"])
        frames = ops.slice_axis(seq, 1, 1, length + 1)
        return ops.matmul(frames, p["out_proj.w"]) + p["out_proj.b"]

    def _block(self, x: Tensor, i: int, pdrop: float, rng) -> Tensor:
        p = self.params
        cfg = self.config
        pre = f"blocks.{i}"
        batch, s_len, h = x.shape
        heads, dh = cfg.heads, cfg.hidden_dim // cfg.heads

        a = ops.layernorm(x, p[f"{pre}.ln1.g"], p[f"{pre}.ln1.b"])

        def heads_split(z):
            return ops.transpose(ops.reshape(z, (batch, s_len, heads, dh)), (0, 2, 1, 3))

        q = heads_split(ops.matmul(a, p[f"{pre}.attn.wq"]) + p[f"{pre}.attn.bq"])
        k = heads_split(ops.matmul(a, p[f"{pre}.attn.wk"]) + p[f"{pre}.attn.bk"])
        v = heads_split(ops.matmul(a, p[f"{pre}.attn.wv"]) + p[f"{pre}.attn.bv"])
        att = ops.softmax(ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(dh)))
        mixed = ops.reshape(ops.transpose(ops.matmul(att, v), (0, 2, 1, 3)), (batch, s_len, h))
        mixed = ops.matmul(mixed, p[f"{pre}.attn.wo"]) + p[f"{pre}.attn.bo"]
        if pdrop > 0.0:
            mixed = ops.dropout(mixed, pdrop, rng)
        x = x + mixed

        m = ops.layernorm(x, p[f"{pre}.ln2.g"], p[f"{pre}.ln2.b"])
        m = ops.gelu(ops.matmul(m, p[f"{pre}.mlp.w1"]) + p[f"{pre}.mlp.b1"])
        m = ops.matmul(m, p[f"{pre}.mlp.w2"]) + p[f"{pre}.mlp.b2"]
        if pdrop > 0.0:
            m = ops.dropout(m, pdrop, rng)
        return x + m

    # -- single-sequence conveniences (numpy in, numpy out) ------------------

    def m2d_forward(self, x_t: np.ndarray, t: int, cond) -> np.ndarray:
        """Base-stage prediction for one sequence [L, frame_width]."""
        if self.config.ssr:
            raise ValueError("this denoiser is configured as the SSR stage")
        out = self.forward_batch(x_t[None, ...], np.array([t]), _rowify(cond), None, rng=None)
        return out.data[0]

    def ssr_forward(self, x_t: np.ndarray, t: int, cond, x_low_aug: np.ndarray, s: int) -> np.ndarray:
        """SSR prediction: channel-concat the (already augmented) low-res input.

        The timestep embedding receives ``t + s``.
        """
        if not self.config.ssr:
            raise ValueError("this denoiser is configured as the base stage")
        if x_low_aug.shape != x_t.shape:
            raise ValueError("low-resolution conditioning length/width mismatch")
        joint = np.concatenate([x_t, x_low_aug], axis=-1)
        out = self.forward_batch(joint[None, ...], np.array([t + s]), _rowify(cond), None, rng=None)
        return out.data[0]


def _rowify(cond):
    if cond is None:
        return None
    arr = np.asarray(cond.data if isinstance(cond, Tensor) else cond, dtype=np.float64)
    return arr.reshape(1, -1)


@dataclass(frozen=True)
class Normalizer:
    """Per-channel affine data whitening used in model space."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        for name in ("mean", "std"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.std <= 0.0):
            raise ValueError("normalizer std must be positive")

    @classmethod
    def identity(cls, width: int) -> "Normalizer":
        return cls(mean=np.zeros(width), std=np.ones(width))

    @classmethod
    def fit(cls, frames: np.ndarray, floor: float = 1e-6) -> "Normalizer":
        """Channel stats over an [N, width] stack; tiny stds are floored."""
        mean = frames.mean(axis=0)
        std = np.maximum(frames.std(axis=0), floor)
        return cls(mean=mean, std=std)

    @property
    def is_identity(self) -> bool:
        return bool(np.all(self.mean == 0.0) and np.all(self.std == 1.0))

    def encode(self, frames: np.ndarray) -> np.ndarray:
        if self.is_identity:
            return frames
        return (frames - self.mean) / self.std

    def decode(self, frames: np.ndarray) -> np.ndarray:
        if self.is_identity:
            return frames
        return frames * self.std + self.mean

    def decode_t(self, frames: Tensor) -> Tensor:
        if self.is_identity:
            return frames
        return frames * Tensor(self.std) + Tensor(self.mean)
