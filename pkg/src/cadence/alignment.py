"""Contrastive alignment of audio features to motion embeddings.

Two frozen stand-in encoders map each modality into a shared 512-d space:
a fixed random projection for the audio feature vector and a fixed-seed
tiny transformer pooled over frames for motion. Only a 2-layer MLP adapter
(on the audio side) and a log-temperature are trained, with a symmetric
InfoNCE objective over in-batch negatives.

Frozen weights are module-level constants derived from fixed seeds; nothing
in the training path can mutate them.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .motion import MotionSequence, downsample
from .optim import AdamState, adam_step
from .rng import SplitMix64
from .tensor import Tape, Tensor, backward

EMBED_DIM = 512
ENCODER_FPS = 30
ENCODER_FRAMES = 180  # 6-second clips at 30 fps
_MUSIC_SEED = 0x4D55534943  # "MUSIC"
_MOTION_SEED = 0x4D4F54494F4E  # "MOTION"
_TAU_INIT = 0.07
_LOG_TAU_BOUNDS = (math.log(1e-3), math.log(100.0))

_music_cache: dict[int, np.ndarray] = {}
_motion_cache: dict[int, dict[str, np.ndarray]] = {}


# ---------------------------------------------------------------------------
# frozen encoders

def _music_weights(feature_dim: int) -> np.ndarray:
    w = _music_cache.get(feature_dim)
    if w is None:
        rng = SplitMix64(_MUSIC_SEED ^ feature_dim)
        w = rng.normal((EMBED_DIM, feature_dim)) / math.sqrt(feature_dim)
        w.setflags(write=False)
        _music_cache[feature_dim] = w
    return w


def music_encoder_frozen(audio_feature: np.ndarray) -> np.ndarray:
    """Fixed random-projection encoder, feature vector -> [512]."""
    f = np.asarray(audio_feature, dtype=np.float64).reshape(-1)
    w = _music_weights(f.size)
    return np.tanh(w @ f)


def _motion_params(frame_width: int) -> dict[str, np.ndarray]:
    params = _motion_cache.get(frame_width)
    if params is not None:
        return params
    rng = SplitMix64(_MOTION_SEED ^ frame_width)
    h = 64

    def xavier(shape):
        limit = math.sqrt(6.0 / (shape[0] + shape[-1]))
        return limit * (2.0 * rng.uniform(size=shape) - 1.0)

    params = {"in.w": xavier((frame_width, h)), "pos": 0.05 * rng.normal((ENCODER_FRAMES, h))}
    for i in range(2):
        params[f"b{i}.wq"] = xavier((h, h))
        params[f"b{i}.wk"] = xavier((h, h))
        params[f"b{i}.wv"] = xavier((h, h))
        params[f"b{i}.wo"] = xavier((h, h))
        params[f"b{i}.w1"] = xavier((h, 2 * h))
        params[f"b{i}.w2"] = xavier((2 * h, h))
    params["out.w"] = xavier((h * 2 * _POOL_FREQS, EMBED_DIM))
    for v in params.values():
        v.setflags(write=False)
    _motion_cache[frame_width] = params
    return params


def _ln(x: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    return xc / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + 1e-5)


_POOL_FREQS = 16  # sinusoid-windowed pooling keeps tempo/phase visible


def _pool_windows() -> np.ndarray:
    """[2*F, 180] pooling windows: cos/sin at 1..F cycles per clip.

    No uniform window: the frame-mean is nearly clip-independent here and
    would swamp the informative (periodic) components.
    """
    i = np.arange(ENCODER_FRAMES)
    rows = []
    for f in range(1, _POOL_FREQS + 1):
        ang = 2.0 * np.pi * f * i / ENCODER_FRAMES
        rows.append(np.cos(ang))
        rows.append(np.sin(ang))
    return np.stack(rows) / ENCODER_FRAMES


def motion_encoder_frozen(seq: MotionSequence) -> np.ndarray:
    """Frozen fixed-seed transformer pooled over frames -> [512].

    Pooling uses uniform plus sinusoid-weighted frame averages so periodic
    structure (tempo, phase) survives the reduction. Requires 30 fps,
    6-second (180-frame) input; see :func:`prepare_motion_for_encoder` for
    the standard preprocessing.
    """
    if seq.fps != ENCODER_FPS:
        raise ValueError(f"motion encoder expects {ENCODER_FPS} fps, got {seq.fps}")
    if seq.length != ENCODER_FRAMES:
        raise ValueError(f"motion encoder expects {ENCODER_FRAMES} frames, got {seq.length}")
    p = _motion_params(seq.frames.shape[1])
    x = seq.frames @ p["in.w"] + p["pos"]
    scale = 1.0 / math.sqrt(x.shape[1])
    for i in range(2):
        a = _ln(x)
        q, k, v = a @ p[f"b{i}.wq"], a @ p[f"b{i}.wk"], a @ p[f"b{i}.wv"]
        logits = (q @ k.T) * scale
        logits -= logits.max(axis=-1, keepdims=True)
        att = np.exp(logits)
        att /= att.sum(axis=-1, keepdims=True)
        x = x + (att @ v) @ p[f"b{i}.wo"]
        m = _ln(x)
        x = x + np.maximum(m @ p[f"b{i}.w1"], 0.0) @ p[f"b{i}.w2"]
    pooled = _pool_windows() @ _ln(x)  # [2F, h]
    return pooled.reshape(-1) @ p["out.w"]


def prepare_motion_for_encoder(seq: MotionSequence) -> MotionSequence:
    """Resample a 60 fps clip to the encoder's fixed 30 fps / 180-frame input.

    Longer clips are truncated; shorter ones hold the final pose.
    """
    low = downsample(seq, ENCODER_FPS) if seq.fps != ENCODER_FPS else seq
    frames = low.frames
    if frames.shape[0] >= ENCODER_FRAMES:
        frames = frames[:ENCODER_FRAMES]
    else:
        pad = np.repeat(frames[-1:], ENCODER_FRAMES - frames.shape[0], axis=0)
        frames = np.concatenate([frames, pad], axis=0)
    return MotionSequence(fps=ENCODER_FPS, frames=frames)


def encoder_fingerprint(feature_dim: int, frame_width: int) -> str:
    """Digest of all frozen encoder weights (freeze-contract checks)."""
    parts = [_music_weights(feature_dim).tobytes()]
    for name in sorted(_motion_params(frame_width)):
        parts.append(_motion_params(frame_width)[name].tobytes())
    return hashlib.sha256(b"".join(parts)).hexdigest()


# ---------------------------------------------------------------------------
# adapter

@dataclass
class AdapterParams:
    """Two affine layers (512 hidden) plus a learnable log-temperature."""

    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def init(cls, seed: int = 0) -> "AdapterParams":
        rng = SplitMix64(seed ^ 0xADA77E12)

        def xavier(shape):
            limit = math.sqrt(6.0 / (shape[0] + shape[-1]))
            return limit * (2.0 * rng.uniform(size=shape) - 1.0)

        return cls(
            arrays={
                "w1": xavier((EMBED_DIM, EMBED_DIM)),
                "b1": np.zeros(EMBED_DIM),
                "w2": xavier((EMBED_DIM, EMBED_DIM)),
                "b2": np.zeros(EMBED_DIM),
                "log_tau": np.array(math.log(_TAU_INIT)),
            }
        )

    @property
    def tau(self) -> float:
        return float(np.exp(np.clip(self.arrays["log_tau"], *_LOG_TAU_BOUNDS)))


def adapter_forward_t(music_vec: Tensor, params: dict[str, Tensor]) -> Tensor:
    """Differentiable adapter: [N, 512] -> [N, 512]."""
    hidden = ops.gelu(ops.matmul(music_vec, params["w1"]) + params["b1"])
    return ops.matmul(hidden, params["w2"]) + params["b2"]


def adapter_forward(music_vec: np.ndarray, params: AdapterParams) -> np.ndarray:
    """Condition embedding for one (or a batch of) music vectors."""
    arr = np.asarray(music_vec, dtype=np.float64)
    single = arr.ndim == 1
    leaves = {k: Tensor(v) for k, v in params.arrays.items()}
    out = adapter_forward_t(Tensor(arr.reshape(-1, EMBED_DIM)), leaves).data
    return out[0] if single else out


def condition_embedding(audio_feature: np.ndarray, params: AdapterParams) -> np.ndarray:
    return adapter_forward(music_encoder_frozen(audio_feature), params)


# ---------------------------------------------------------------------------
# InfoNCE

def _row_normalize_t(x: Tensor) -> Tensor:
    norms_sq = ops.sum_sq(x, axis=-1, keepdims=True)
    if np.any(norms_sq.data <= 0.0):
        raise ValueError("zero-norm embedding row in contrastive batch")
    return x / ops.sqrt(norms_sq)


def infonce_loss_t(music: Tensor, dance: Tensor, tau) -> Tensor:
    """Symmetric InfoNCE over cosine similarities; both directions averaged."""
    n = music.shape[0]
    if n < 2 or dance.shape[0] != n:
        raise ValueError(f"need matched batches of >= 2 rows, got {music.shape}/{dance.shape}")
    sims = ops.matmul(_row_normalize_t(music), ops.transpose(_row_normalize_t(dance), (1, 0)))
    logits = sims / tau if isinstance(tau, Tensor) else sims * (1.0 / float(tau))
    eye = Tensor(np.eye(n))

    def direction(lg: Tensor) -> Tensor:
        shift = Tensor(lg.data.max(axis=1, keepdims=True))
        lse = ops.log(ops.sum(ops.exp(lg - shift), axis=1)) + ops.reshape(shift, (n,))
        diag = ops.sum(lg * eye, axis=1)
        return ops.mean(lse - diag)

    return 0.5 * (direction(logits) + direction(ops.transpose(logits, (1, 0))))


def infonce_loss(music_batch: np.ndarray, dance_batch: np.ndarray, tau: float) -> float:
    if tau <= 0.0:
        raise ValueError("temperature must be positive")
    return float(infonce_loss_t(Tensor(music_batch), Tensor(dance_batch), float(tau)).data)


# ---------------------------------------------------------------------------
# training

def embed_dataset(clips) -> tuple[np.ndarray, np.ndarray]:
    """Frozen-encoder embeddings for paired clips -> (music [N,512], dance [N,512])."""
    music = np.stack([music_encoder_frozen(c.audio_feature) for c in clips])
    dance = np.stack(
        [motion_encoder_frozen(prepare_motion_for_encoder(c.motion)) for c in clips]
    )
    return music, dance


def train_alignment(
    clips,
    epochs: int = 150,
    lr: float = 1e-3,
    batch_size: int = 32,
    seed: int = 0,
) -> tuple[AdapterParams, list[float]]:
    """Fit the adapter on paired clips; frozen encoders are never touched.

    Returns the trained parameters and the per-epoch mean loss history.
    """
    if len(clips) == 0:
        raise ValueError("empty alignment dataset")
    music, dance = embed_dataset(clips)
    n = music.shape[0]
    batch_size = min(batch_size, n)
    params = AdapterParams.init(seed)
    state = AdamState.init(params.arrays)
    base_rng = SplitMix64(seed ^ 0x1FCE)
    history: list[float] = []
    step = 0
    for _ in range(epochs):
        epoch_losses = []
        for _ in range(max(1, n // batch_size)):
            rng = base_rng.fork(step)
            idx = rng.randint(0, n, size=batch_size)
            leaves = {k: Tensor(v, leaf=True) for k, v in params.arrays.items()}
            with Tape() as tape:
                m_emb = adapter_forward_t(Tensor(music[idx]), leaves)
                tau = ops.exp(ops.clip(leaves["log_tau"], *_LOG_TAU_BOUNDS))
                loss = infonce_loss_t(m_emb, Tensor(dance[idx]), tau)
            grads = backward(tape, loss)
            grad_arrays = {k: grads.get(v) for k, v in leaves.items()}
            params.arrays, state = adam_step(params.arrays, grad_arrays, state, lr)
            epoch_losses.append(loss.item())
            step += 1
        history.append(float(np.mean(epoch_losses)))
    return params, history


def retrieval_recall_at_1(params: AdapterParams, clips) -> float:
    """Fraction of clips whose adapted music embedding ranks its own motion first."""
    music, dance = embed_dataset(clips)
    m = adapter_forward(music, params)
    m = m / np.linalg.norm(m, axis=1, keepdims=True)
    d = dance / np.linalg.norm(dance, axis=1, keepdims=True)
    hits = (m @ d.T).argmax(axis=1) == np.arange(len(clips))
    return float(hits.mean())
