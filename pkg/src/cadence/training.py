"""Dataset persistence and the two diffusion-stage trainers.

Every stochastic choice at training step ``k`` (batch members, window
offsets, timesteps, noise, condition dropout, model dropout) is drawn from
``SplitMix64(seed).fork(k)``, so a run is a pure function of (dataset,
config, seed) and resuming from a checkpoint continues bit-identically.

The base stage trains on 15 fps windows cropped from the clips; the
super-resolution stage trains on 60 fps windows conditioned on their own
linearly re-upsampled 15 fps decimation, corrupted at a random augmentation
step. Conditions are recomputed per window with the window's phase so
cropping never decouples the audio embedding from the motion it describes.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .alignment import AdapterParams, condition_embedding
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig
from .denoiser import Denoiser, Normalizer
from .diffusion import NoiseSchedule, conditioning_augment, condition_dropout, q_sample
from .losses import combined_loss_t
from .motion import BeatGrid, MotionSequence, downsample, skeleton_preset, upsample_linear
from .motion_io import load_motion, save_motion
from .optim import AdamState, adam_step
from .rng import SplitMix64
from .synthetic import ClipParams, encode_audio_feature, generate_clip, sample_clip_params
from .tensor import Tape, Tensor, backward

LOG_COLUMNS = ("step", "simple", "pos_all", "pos_key", "rot_key", "lambda_t", "total",
               "dropped", "batch")


# ---------------------------------------------------------------------------
# dataset on disk

@dataclass
class ClipRecord:
    name: str
    split: str
    motion: MotionSequence
    params: ClipParams
    beats: BeatGrid
    audio_feature: np.ndarray
    seed: int


def write_dataset(out_dir, config: RunConfig) -> dict:
    """Generate train/align/holdout splits and write clips + manifest.

    Returns the manifest dict. Regeneration with the same config reproduces
    identical bytes.
    """
    out_dir = Path(out_dir)
    clips_dir = out_dir / "clips"
    clips_dir.mkdir(parents=True, exist_ok=True)
    gen_cfg = config.generator_config()
    skel = skeleton_preset(config.skeleton)
    entries = []
    split_sizes = (
        ("train", config.data_clips),
        ("align", config.data_align_clips),
        ("holdout", config.data_holdout_clips),
    )
    for split, count in split_sizes:
        base = SplitMix64(config.seed).fork(hash_split(split))
        for i in range(count):
            clip_seed = int(base.fork(i).u64(1)[0] >> 1)
            params = sample_clip_params(gen_cfg, clip_seed)
            clip = generate_clip(params, skel)
            name = f"{split}_{i:04d}"
            save_motion(clip.motion, clips_dir / f"{name}.mot")
            sidecar = {
                "audio_feature": clip.audio_feature.tolist(),
                "beats": clip.beats.timestamps.tolist(),
                "duration_s": params.duration_s,
                "tempo_bpm": params.tempo_bpm,
                "phase_frac": params.phase_frac,
                "genre": params.genre,
                "amp": params.amp,
                "seed": clip_seed,
            }
            (clips_dir / f"{name}.json").write_text(json.dumps(sidecar, sort_keys=True))
            entries.append({"name": name, "split": split, "file": f"clips/{name}.mot", **sidecar})
    manifest = {
        "skeleton": config.skeleton,
        "seed": config.seed,
        "splits": {s: c for s, c in split_sizes},
        "clips": entries,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))
    return manifest


def hash_split(split: str) -> int:
    return int.from_bytes(split.encode("utf-8").ljust(8, b"\0")[:8], "little")


def load_dataset(data_dir) -> dict[str, list[ClipRecord]]:
    data_dir = Path(data_dir)
    manifest = json.loads((data_dir / "manifest.json").read_text())
    splits: dict[str, list[ClipRecord]] = {}
    for entry in manifest["clips"]:
        params = ClipParams(
            tempo_bpm=entry["tempo_bpm"], duration_s=entry["duration_s"],
            phase_frac=entry["phase_frac"], genre=entry["genre"], amp=entry["amp"],
        )
        motion = load_motion(data_dir / entry["file"])
        rec = ClipRecord(
            name=entry["name"],
            split=entry["split"],
            motion=motion,
            params=params,
            beats=BeatGrid(np.asarray(entry["beats"]), entry["duration_s"]),
            audio_feature=np.asarray(entry["audio_feature"]),
            seed=entry["seed"],
        )
        splits.setdefault(entry["split"], []).append(rec)
    return splits


# ---------------------------------------------------------------------------
# shared trainer plumbing

class TrainLog:
    def __init__(self, path):
        self.path = Path(path) if path is not None else None
        self.rows: list[dict] = []

    def add(self, row: dict) -> None:
        self.rows.append(row)

    def write(self) -> None:
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
            writer.writeheader()
            writer.writerows(self.rows)

    @property
    def drop_rate(self) -> float:
        dropped = sum(r["dropped"] for r in self.rows)
        total = sum(r["batch"] for r in self.rows)
        return dropped / max(total, 1)


def window_condition(record: ClipRecord, start_s: float, adapter: AdapterParams) -> np.ndarray:
    """Condition embedding for a crop starting ``start_s`` seconds in."""
    feat = encode_audio_feature(record.params, start_s)
    return condition_embedding(feat, adapter)


def _clip_fk(frames: np.ndarray, skel) -> tuple[np.ndarray, np.ndarray]:
    """Precompute (positions, root_rot) for a whole clip; sliced per window."""
    from .motion import fk_t

    res = fk_t(skel, Tensor(frames))
    return res.positions.data, res.root_rot.data


def _abort_if_not_finite(value: float, step: int, stage: str) -> None:
    if not np.isfinite(value):
        raise RuntimeError(
            f"{stage} training diverged: non-finite loss {value} at step {step}"
        )


@dataclass
class StageArtifacts:
    denoiser: Denoiser
    opt_state: AdamState
    step: int
    seed: int

    def checkpoint_blob(self, kind: str, run_config_meta: dict) -> tuple[dict, dict]:
        config = {
            "kind": kind,
            "denoiser": self.denoiser.config.to_dict(),
            "step": self.step,
            "seed": self.seed,
            "opt_step": self.opt_state.step,
            **run_config_meta,
        }
        arrays = dict(self.denoiser.param_arrays())
        arrays["buffer.mean"] = self.denoiser.normalizer.mean
        arrays["buffer.std"] = self.denoiser.normalizer.std
        for name, m in self.opt_state.m.items():
            arrays[f"opt.m.{name}"] = m
        for name, v in self.opt_state.v.items():
            arrays[f"opt.v.{name}"] = v
        return config, arrays


def save_stage(path, kind: str, art: StageArtifacts, meta: dict) -> None:
    config, arrays = art.checkpoint_blob(kind, meta)
    save_checkpoint(path, config, arrays)


def load_stage(path) -> tuple[StageArtifacts, dict]:
    from .denoiser import DenoiserConfig

    config, arrays = load_checkpoint(path)
    den_cfg = DenoiserConfig.from_dict(config["denoiser"])
    params = {k: v for k, v in arrays.items() if not k.startswith(("buffer.", "opt."))}
    normalizer = Normalizer(mean=arrays["buffer.mean"], std=arrays["buffer.std"])
    den = Denoiser(den_cfg, params, normalizer)
    opt = AdamState(
        m={k[len("opt.m."):]: v for k, v in arrays.items() if k.startswith("opt.m.")},
        v={k[len("opt.v."):]: v for k, v in arrays.items() if k.startswith("opt.v.")},
        step=config["opt_step"],
    )
    return StageArtifacts(denoiser=den, opt_state=opt, step=config["step"], seed=config["seed"]), config


# ---------------------------------------------------------------------------
# base-stage trainer (music-to-dance, 15 fps)

def train_m2d(
    records: list[ClipRecord],
    adapter: AdapterParams,
    config: RunConfig,
    sched: NoiseSchedule,
    seed: int,
    steps: int | None = None,
    log: TrainLog | None = None,
    resume: StageArtifacts | None = None,
) -> StageArtifacts:
    if not records:
        raise ValueError("empty training dataset")
    skel = skeleton_preset(config.skeleton)
    steps = config.m2d_steps if steps is None else steps
    win = config.m2d_frames
    fps = 15

    low = [downsample(r.motion, fps) for r in records]
    for seq in low:
        if seq.length < win:
            raise ValueError(f"clip shorter than the {win}-frame training window")
    if resume is None:
        normalizer = Normalizer.fit(np.concatenate([s.frames for s in low], axis=0))
        den = Denoiser.init(config.m2d_config(skel.frame_width), seed)
        den.normalizer = normalizer
        art = StageArtifacts(den, AdamState.init(den.param_arrays()), 0, seed)
    else:
        art = resume
    den = art.denoiser
    raw = [s.frames for s in low]
    norm = [den.normalizer.encode(f) for f in raw]
    gt_fk = [_clip_fk(f, skel) for f in raw]
    weights = config.loss_weights()
    base_rng = SplitMix64(seed)

    for k in range(art.step, steps):
        rng = base_rng.fork(k)
        batch = config.m2d_batch
        idx = rng.randint(0, len(records), size=batch)
        starts = [rng.randint(0, low[i].length - win + 1) for i in idx]
        x0_norm = np.stack([norm[i][s : s + win] for i, s in zip(idx, starts)])
        x0_raw = np.stack([raw[i][s : s + win] for i, s in zip(idx, starts)])
        fk_batch = (
            np.stack([gt_fk[i][0][s : s + win] for i, s in zip(idx, starts)]),
            np.stack([gt_fk[i][1][s : s + win] for i, s in zip(idx, starts)]),
        )
        t = rng.randint(1, sched.T + 1, size=batch)
        x_t = q_sample(x0_norm, t, rng.normal(size=x0_norm.shape), sched)

        conds = np.zeros((batch, den.config.cond_dim))
        null_mask = np.zeros(batch)
        for b, (i, s) in enumerate(zip(idx, starts)):
            c = window_condition(records[i], s / fps, adapter)
            kept = condition_dropout(c, config.cond_dropout, rng)
            if kept is None:
                null_mask[b] = 1.0
            else:
                conds[b] = kept

        params = den.params
        with Tape() as tape:
            pred_norm = den.forward_batch(x_t, t, conds, null_mask, rng=rng)
            pred_raw = den.normalizer.decode_t(pred_norm)
            total, parts = combined_loss_t(
                pred_raw, x0_raw, t, sched.T, weights, skel, fps, gt_fk=fk_batch
            )
        _abort_if_not_finite(total.item(), k, "m2d")
        grads = backward(tape, total)
        grad_arrays = {name: grads.get(tensor) for name, tensor in params.items()}
        new_params, art.opt_state = adam_step(
            den.param_arrays(), grad_arrays, art.opt_state, config.m2d_lr,
            weight_decay=config.weight_decay,
        )
        den.set_param_arrays(new_params)
        art.step = k + 1
        if log is not None:
            row = {"step": k, "dropped": int(null_mask.sum()), "batch": batch}
            for name in ("simple", "pos_all", "pos_key", "rot_key", "lambda_t"):
                row[name] = float(np.mean(parts[name]))
            row["total"] = total.item()
            log.add(row)
    return art


# ---------------------------------------------------------------------------
# super-resolution trainer (60 fps)

def make_low_res_conditioning(window: MotionSequence) -> np.ndarray:
    """Ground-truth low-res conditioning: decimate to 15 fps, upsample back."""
    return upsample_linear(downsample(window, 15), 60).frames


def train_ssr(
    records: list[ClipRecord],
    adapter: AdapterParams,
    config: RunConfig,
    sched: NoiseSchedule,
    seed: int,
    steps: int | None = None,
    log: TrainLog | None = None,
    resume: StageArtifacts | None = None,
) -> StageArtifacts:
    if not records:
        raise ValueError("empty training dataset")
    skel = skeleton_preset(config.skeleton)
    steps = config.ssr_steps if steps is None else steps
    win = config.ssr_window
    fps = 60
    for r in records:
        if r.motion.length < win:
            raise ValueError(f"clip shorter than the {win}-frame SSR window")
    if resume is None:
        normalizer = Normalizer.fit(np.concatenate([r.motion.frames for r in records], axis=0))
        den = Denoiser.init(config.ssr_config(skel.frame_width), seed + 1)
        den.normalizer = normalizer
        art = StageArtifacts(den, AdamState.init(den.param_arrays()), 0, seed)
    else:
        art = resume
    den = art.denoiser
    weights = config.loss_weights()
    gt_fk = [_clip_fk(r.motion.frames, skel) for r in records]
    base_rng = SplitMix64(seed ^ 0x55F2)
    s_max = min(config.ssr_s_max, sched.T)

    for k in range(art.step, steps):
        rng = base_rng.fork(k)
        batch = config.ssr_batch
        idx = rng.randint(0, len(records), size=batch)
        # snap window starts to the 15 fps grid so the decimation pattern
        # matches what the sampler produces at inference time
        starts = [
            4 * rng.randint(0, (records[i].motion.length - win) // 4 + 1) for i in idx
        ]
        x0_raw = np.stack(
            [records[i].motion.frames[s : s + win] for i, s in zip(idx, starts)]
        )
        fk_batch = (
            np.stack([gt_fk[i][0][s : s + win] for i, s in zip(idx, starts)]),
            np.stack([gt_fk[i][1][s : s + win] for i, s in zip(idx, starts)]),
        )
        x0_norm = np.stack([den.normalizer.encode(f) for f in x0_raw])
        low_raw = np.stack(
            [
                make_low_res_conditioning(
                    MotionSequence(fps=60, frames=records[i].motion.frames[s : s + win])
                )
                for i, s in zip(idx, starts)
            ]
        )
        low_norm = np.stack([den.normalizer.encode(f) for f in low_raw])

        t = rng.randint(1, sched.T + 1, size=batch)
        s_aug = rng.randint(0, s_max + 1, size=batch)
        x_t = q_sample(x0_norm, t, rng.normal(size=x0_norm.shape), sched)
        low_aug = np.stack(
            [
                conditioning_augment(low_norm[b], int(s_aug[b]), sched, rng, s_max)
                for b in range(batch)
            ]
        )

        conds = np.zeros((batch, den.config.cond_dim))
        null_mask = np.zeros(batch)
        for b, (i, s) in enumerate(zip(idx, starts)):
            c = window_condition(records[i], s / fps, adapter)
            kept = condition_dropout(c, config.cond_dropout, rng)
            if kept is None:
                null_mask[b] = 1.0
            else:
                conds[b] = kept

        joint = np.concatenate([x_t, low_aug], axis=-1)
        params = den.params
        with Tape() as tape:
            pred_norm = den.forward_batch(joint, t + s_aug, conds, null_mask, rng=rng)
            pred_raw = den.normalizer.decode_t(pred_norm)
            total, parts = combined_loss_t(
                pred_raw, x0_raw, t, sched.T, weights, skel, fps, gt_fk=fk_batch
            )
        _abort_if_not_finite(total.item(), k, "ssr")
        grads = backward(tape, total)
        grad_arrays = {name: grads.get(tensor) for name, tensor in params.items()}
        new_params, art.opt_state = adam_step(
            den.param_arrays(), grad_arrays, art.opt_state, config.ssr_lr,
            weight_decay=config.weight_decay,
        )
        den.set_param_arrays(new_params)
        art.step = k + 1
        if log is not None:
            row = {"step": k, "dropped": int(null_mask.sum()), "batch": batch}
            for name in ("simple", "pos_all", "pos_key", "rot_key", "lambda_t"):
                row[name] = float(np.mean(parts[name]))
            row["total"] = total.item()
            log.add(row)
    return art
