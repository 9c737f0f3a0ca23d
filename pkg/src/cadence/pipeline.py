"""End-to-end commands: data generation, training, sampling, evaluation.

The cascade at sampling time: the base stage denoises ``L`` frames at
15 fps under classifier-free guidance (optionally seed-constrained), the
result is linearly upsampled 4x, and the super-resolution stage re-denoises
each 240-frame window conditioned on the (noise-augmented) upsampled input,
blending overlapping windows with a linear cross-fade.

Model access goes through small provider objects so tests can swap in
oracles (providers that return ground truth) without touching the sampler.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .alignment import AdapterParams, condition_embedding, train_alignment
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig
from .denoiser import Denoiser, Normalizer
from .diffusion import NoiseSchedule, SamplerConfig, conditioning_augment, sample_loop
from .metrics import (
    BAS_SIGMA_SECONDS,
    EvalClip,
    beat_align_score,
    evaluate_suite,
    extract_dance_beats,
    kinetic_velocity,
)
from .motion import BeatGrid, MotionSequence, downsample, skeleton_preset, upsample_linear
from .motion_io import load_motion, save_motion
from .rng import SplitMix64
from .training import (
    ClipRecord,
    StageArtifacts,
    TrainLog,
    load_dataset,
    load_stage,
    save_stage,
    train_m2d,
    train_ssr,
    write_dataset,
)

LOW_FPS = 15
HIGH_FPS = 60
UPSAMPLE_FACTOR = HIGH_FPS // LOW_FPS


# ---------------------------------------------------------------------------
# sampling providers

class M2dProvider:
    """Base-stage model surface used by the cascade sampler."""

    def __init__(self, denoiser: Denoiser):
        self.denoiser = denoiser
        self.normalizer = denoiser.normalizer
        self.max_frames = denoiser.config.max_frames
        self.frame_width = denoiser.config.frame_width

    def model_fn(self):
        den = self.denoiser

        def fn(x, t, cond):
            c = None if cond is None else np.asarray(cond).reshape(1, -1)
            return den.forward_batch(x[None], np.array([t]), c, None).data[0]

        return fn


class SsrProvider:
    """Super-resolution surface; one denoise closure per window."""

    def __init__(self, denoiser: Denoiser):
        self.denoiser = denoiser
        self.normalizer = denoiser.normalizer
        self.window = denoiser.config.max_frames
        self.frame_width = denoiser.config.frame_width

    def window_model(self, start: int, low_aug_norm: np.ndarray, s: int):
        den = self.denoiser

        def fn(x, t, cond):
            c = None if cond is None else np.asarray(cond).reshape(1, -1)
            joint = np.concatenate([x, low_aug_norm], axis=-1)
            return den.forward_batch(joint[None], np.array([t + s]), c, None).data[0]

        return fn


class OracleM2d:
    """Provider that always predicts a fixed ground-truth low-res clip."""

    def __init__(self, truth_low: MotionSequence, max_frames: int | None = None):
        self.truth = truth_low.frames
        self.normalizer = Normalizer.identity(truth_low.frames.shape[1])
        self.max_frames = max_frames or truth_low.length
        self.frame_width = truth_low.frames.shape[1]

    def model_fn(self):
        truth = self.truth

        def fn(x, t, cond):
            return truth[: x.shape[0]]

        return fn


class OracleSsr:
    """Provider that predicts slices of a fixed ground-truth 60 fps clip."""

    def __init__(self, truth_high: MotionSequence, window: int = 240):
        self.truth = truth_high.frames
        self.normalizer = Normalizer.identity(truth_high.frames.shape[1])
        self.window = min(window, truth_high.length)
        self.frame_width = truth_high.frames.shape[1]

    def window_model(self, start: int, low_aug_norm: np.ndarray, s: int):
        truth = self.truth

        def fn(x, t, cond):
            return truth[start : start + x.shape[0]]

        return fn


# ---------------------------------------------------------------------------
# cascade sampling

def _window_starts(length: int, window: int) -> list[int]:
    if length <= window:
        return [0]
    stride = window // 2
    starts = list(range(0, length - window + 1, stride))
    if starts[-1] != length - window:
        starts.append(length - window)
    return starts


def _crossfade_into(canvas: np.ndarray, filled_to: int, start: int, piece: np.ndarray) -> int:
    """Write ``piece`` at ``start``, linearly cross-fading any overlap.

    Blending uses ``old + w * (new - old)`` so identical content passes
    through bit-exactly.
    """
    end = start + piece.shape[0]
    overlap = filled_to - start
    if overlap > 0:
        w = (np.arange(1, overlap + 1) / (overlap + 1))[:, None]
        old = canvas[start:filled_to]
        canvas[start:filled_to] = old + w * (piece[:overlap] - old)
        canvas[filled_to:end] = piece[overlap:]
    else:
        canvas[start:end] = piece
    return max(filled_to, end)


def sample_cascade(
    m2d: M2dProvider | OracleM2d,
    ssr: SsrProvider | OracleSsr,
    cond: np.ndarray | None,
    low_frames: int,
    config: RunConfig,
    sched: NoiseSchedule,
    seed: int,
    seed_motion: MotionSequence | None = None,
    sampler_noise: bool = True,
) -> tuple[MotionSequence, MotionSequence]:
    """Run both stages; returns (low-res 15 fps, final 60 fps) sequences."""
    if low_frames < 2 or low_frames > m2d.max_frames:
        raise ValueError(f"low-res length {low_frames} outside [2, {m2d.max_frames}]")
    sigma_mode = config.sigma_mode if sampler_noise else "none"
    rng = SplitMix64(seed ^ 0x5A4D)

    seed_prefix = None
    if seed_motion is not None:
        seed_low = downsample(seed_motion, LOW_FPS) if seed_motion.fps != LOW_FPS else seed_motion
        if seed_low.length > low_frames:
            raise ValueError("seed sequence longer than the requested sample")
        seed_prefix = m2d.normalizer.encode(seed_low.frames)

    low_cfg = SamplerConfig(
        guidance_weight=config.guidance_weight,
        inference_steps=config.inference_steps,
        seed=seed,
        sigma_mode=sigma_mode,
        seed_frames=seed_prefix,
    )
    x_low_norm = sample_loop(
        m2d.model_fn(), cond, low_cfg, sched, (low_frames, m2d.frame_width), rng.fork(1)
    )
    low_seq = MotionSequence(fps=LOW_FPS, frames=m2d.normalizer.decode(x_low_norm))

    low_up = upsample_linear(low_seq, HIGH_FPS)
    length_high = low_up.length
    canvas = np.zeros((length_high, ssr.frame_width))
    filled_to = 0
    s_infer = min(config.ssr_s_infer, sched.T)
    for w_idx, start in enumerate(_window_starts(length_high, ssr.window)):
        stop = min(start + ssr.window, length_high)
        wrng = rng.fork(100 + w_idx)
        low_win_norm = ssr.normalizer.encode(low_up.frames[start:stop])
        low_aug = conditioning_augment(low_win_norm, s_infer, sched, wrng, s_infer)
        win_cfg = SamplerConfig(
            guidance_weight=config.guidance_weight,
            inference_steps=config.inference_steps,
            seed=seed,
            sigma_mode=sigma_mode,
        )
        piece = sample_loop(
            ssr.window_model(start, low_aug, s_infer),
            cond,
            win_cfg,
            sched,
            (stop - start, ssr.frame_width),
            wrng,
        )
        filled_to = _crossfade_into(canvas, filled_to, start, piece)
    high_seq = MotionSequence(fps=HIGH_FPS, frames=ssr.normalizer.decode(canvas))
    return low_seq, high_seq


# ---------------------------------------------------------------------------
# commands

@dataclass
class Checkpoints:
    align: Path
    m2d: Path
    ssr: Path

    @classmethod
    def in_dir(cls, out_dir) -> "Checkpoints":
        out = Path(out_dir)
        return cls(align=out / "align.ckpt", m2d=out / "m2d.ckpt", ssr=out / "ssr.ckpt")


def cmd_gen_data(config: RunConfig, out_dir) -> dict:
    return write_dataset(out_dir, config)


def cmd_train_align(config: RunConfig, data_dir, out_path) -> tuple[AdapterParams, list[float]]:
    splits = load_dataset(data_dir)
    clips = [_as_clip(r) for r in splits.get("align") or splits["train"]]
    params, history = train_alignment(
        clips, epochs=config.align_epochs, lr=config.align_lr,
        batch_size=config.align_batch, seed=config.seed,
    )
    save_checkpoint(
        out_path,
        {"kind": "align", "epochs": config.align_epochs, "seed": config.seed,
         "history": history},
        params.arrays,
    )
    return params, history


def load_adapter(path) -> AdapterParams:
    config, arrays = load_checkpoint(path)
    if config.get("kind") != "align":
        raise ValueError(f"{path} is not an alignment checkpoint")
    return AdapterParams(arrays=arrays)


def _as_clip(record: ClipRecord):
    from .synthetic import SyntheticClip

    return SyntheticClip(
        motion=record.motion, audio_feature=record.audio_feature,
        beats=record.beats, params=record.params,
    )


def cmd_train_m2d(
    config: RunConfig, data_dir, align_ckpt, out_path, log_path=None,
    steps: int | None = None, resume_from=None, seed: int | None = None,
) -> StageArtifacts:
    splits = load_dataset(data_dir)
    adapter = load_adapter(align_ckpt)
    sched = config.schedule()
    log = TrainLog(log_path)
    resume = load_stage(resume_from)[0] if resume_from else None
    seed = config.seed if seed is None else seed
    art = train_m2d(splits["train"], adapter, config, sched, seed,
                    steps=steps, log=log, resume=resume)
    log.write()
    save_stage(out_path, "m2d", art, {"schedule_kind": sched.kind, "T": sched.T,
                                      "fps": LOW_FPS})
    return art


def cmd_train_ssr(
    config: RunConfig, data_dir, align_ckpt, out_path, log_path=None,
    steps: int | None = None, resume_from=None, seed: int | None = None,
) -> StageArtifacts:
    splits = load_dataset(data_dir)
    adapter = load_adapter(align_ckpt)
    sched = config.schedule()
    log = TrainLog(log_path)
    resume = load_stage(resume_from)[0] if resume_from else None
    seed = config.seed if seed is None else seed
    art = train_ssr(splits["train"], adapter, config, sched, seed,
                    steps=steps, log=log, resume=resume)
    log.write()
    save_stage(out_path, "ssr", art, {"schedule_kind": sched.kind, "T": sched.T,
                                      "fps": HIGH_FPS})
    return art


def cmd_sample(
    config: RunConfig,
    ckpts: Checkpoints,
    audio_feature: np.ndarray,
    duration_s: float,
    out_path=None,
    seed: int = 0,
    seed_motion: MotionSequence | None = None,
    music_beats: BeatGrid | None = None,
    sampler_noise: bool = True,
) -> MotionSequence:
    """Cascaded generation from an audio feature vector -> 60 fps motion."""
    adapter = load_adapter(ckpts.align)
    m2d_art, m2d_meta = load_stage(ckpts.m2d)
    ssr_art, ssr_meta = load_stage(ckpts.ssr)
    if m2d_meta.get("kind") != "m2d" or ssr_meta.get("kind") != "ssr":
        raise ValueError("checkpoint kinds do not match the requested stages")
    if m2d_meta["T"] != ssr_meta["T"] or m2d_meta["schedule_kind"] != ssr_meta["schedule_kind"]:
        raise ValueError("stage checkpoints were trained with different schedules")
    sched = config.schedule()
    if sched.T != m2d_meta["T"] or sched.kind != m2d_meta["schedule_kind"]:
        raise ValueError("run config schedule does not match the checkpoints")
    cond = condition_embedding(audio_feature, adapter)
    low_frames = int(round(duration_s * LOW_FPS))
    _, high = sample_cascade(
        M2dProvider(m2d_art.denoiser), SsrProvider(ssr_art.denoiser), cond,
        low_frames, config, sched, seed, seed_motion, sampler_noise,
    )
    if out_path is not None:
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        save_motion(high, out_path)
        sidecar = {
            "audio_feature": np.asarray(audio_feature).tolist(),
            "duration_s": high.duration,
            "seed": seed,
        }
        if music_beats is not None:
            kept = music_beats.timestamps[music_beats.timestamps <= high.duration]
            sidecar["beats"] = kept.tolist()
        out_path.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True))
    return high


def _load_eval_dir(path) -> list[EvalClip]:
    path = Path(path)
    clips = []
    for mot in sorted(path.glob("**/*.mot")):
        motion = load_motion(mot)
        beats = None
        sidecar = mot.with_suffix(".json")
        if sidecar.exists():
            meta = json.loads(sidecar.read_text())
            if meta.get("beats"):
                duration = max(meta.get("duration_s", motion.duration), motion.duration)
                beats = BeatGrid(np.asarray(meta["beats"]), duration)
        clips.append(EvalClip(motion=motion, music_beats=beats))
    if not clips:
        raise ValueError(f"no .mot clips under {path}")
    return clips


def cmd_eval(generated_dir, reference_dir, skeleton: str = "desk9", out_path=None,
             render: bool = True) -> dict:
    """Metric report between two clip directories; optionally writes JSON + figure."""
    skel = skeleton_preset(skeleton)
    report = evaluate_suite(_load_eval_dir(generated_dir), _load_eval_dir(reference_dir), skel)
    if out_path is not None:
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(json.dumps(report, sort_keys=True, indent=1))
        if render:
            from .plotting import save_metric_bars

            save_metric_bars(report, out_path.with_suffix(".png"))
    return report


def cmd_plot_data(
    motion_path, beats_path=None, out_csv=None, skeleton: str = "desk9", render: bool = True
) -> list[dict]:
    """Per-frame kinetic-velocity/beat table (CSV) plus a rendered figure."""
    motion = load_motion(motion_path)
    skel = skeleton_preset(skeleton)
    velocity = kinetic_velocity(motion, skel)
    dance = extract_dance_beats(motion, skel)
    dance_frames = set(np.round(dance.timestamps * motion.fps).astype(int).tolist())
    music_frames: set[int] = set()
    music_times = []
    if beats_path is not None:
        meta = json.loads(Path(beats_path).read_text())
        music_times = [t for t in meta.get("beats", []) if t <= motion.duration]
        music_frames = {int(round(t * motion.fps)) for t in music_times}
        music_frames = {f for f in music_frames if f < motion.length}
    rows = [
        {
            "time": i / motion.fps,
            "kinetic_velocity": float(velocity[i]),
            "is_dance_beat": int(i in dance_frames),
            "is_music_beat": int(i in music_frames),
        }
        for i in range(motion.length)
    ]
    if out_csv is not None:
        out_csv = Path(out_csv)
        out_csv.parent.mkdir(parents=True, exist_ok=True)
        with open(out_csv, "w") as fh:
            fh.write("time,kinetic_velocity,is_dance_beat,is_music_beat\n")
            for r in rows:
                fh.write(
                    f"{r['time']!r},{r['kinetic_velocity']!r},"
                    f"{r['is_dance_beat']},{r['is_music_beat']}\n"
                )
        if render:
            from .plotting import save_beat_plot

            save_beat_plot(
                np.array([r["time"] for r in rows]), velocity,
                dance.timestamps, np.asarray(music_times), out_csv.with_suffix(".png"),
            )
    return rows


def cmd_sweep_augmentation(
    config: RunConfig,
    ckpts: Checkpoints,
    data_dir,
    out_path=None,
    s_values: tuple[int, ...] = (0, 10, 20, 30, 40),
    n_clips: int = 8,
    seed: int = 0,
    render: bool = True,
) -> list[dict]:
    """Sweep the SSR augmentation level over held-out clips.

    ``s_values`` are on the inference-timestep scale (fractions of 100);
    each is mapped to the training schedule. Emits one metric row per s.
    """
    splits = load_dataset(data_dir)
    held = (splits.get("holdout") or splits["train"])[:n_clips]
    adapter = load_adapter(ckpts.align)
    m2d_art, _ = load_stage(ckpts.m2d)
    ssr_art, _ = load_stage(ckpts.ssr)
    sched = config.schedule()
    reference = [EvalClip(r.motion, r.beats) for r in held]
    rows = []
    t0 = time.time()
    for s_inf in s_values:
        cfg_s = _with_s(config, s_inf / config.inference_steps)
        generated = []
        for i, rec in enumerate(held):
            cond = condition_embedding(rec.audio_feature, adapter)
            low_frames = min(int(round(rec.params.duration_s * LOW_FPS)),
                             m2d_art.denoiser.config.max_frames)
            _, high = sample_cascade(
                M2dProvider(m2d_art.denoiser), SsrProvider(ssr_art.denoiser), cond,
                low_frames, cfg_s, sched, seed=seed * 1000 + i,
            )
            beats = BeatGrid(
                rec.beats.timestamps[rec.beats.timestamps <= high.duration], high.duration
            )
            generated.append(EvalClip(high, beats))
        report = evaluate_suite(generated, reference, skeleton_preset(config.skeleton))
        rows.append({"s": s_inf, "fid_k": report["fid_k"], "div_k": report["div_k"],
                     "bas": report["bas"], "seconds": round(time.time() - t0, 2)})
    if out_path is not None:
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, "w") as fh:
            fh.write("s,fid_k,div_k,bas\n")
            for r in rows:
                fh.write(f"{r['s']},{r['fid_k']!r},{r['div_k']!r},{r['bas']!r}\n")
        if render:
            from .plotting import save_sweep_plot

            save_sweep_plot(rows, out_path.with_suffix(".png"))
    return rows


def _with_s(config: RunConfig, frac: float) -> RunConfig:
    from dataclasses import replace

    return replace(config, ssr_s_infer_frac=frac)


def untrained_baseline_bas(
    config: RunConfig,
    records: list[ClipRecord],
    adapter: AdapterParams,
    seed: int,
) -> float:
    """BAS of motion sampled from freshly initialized (untrained) stages."""
    skel = skeleton_preset(config.skeleton)
    sched = config.schedule()
    m2d = Denoiser.init(config.m2d_config(skel.frame_width), seed)
    ssr = Denoiser.init(config.ssr_config(skel.frame_width), seed + 1)
    frames15 = np.concatenate([downsample(r.motion, LOW_FPS).frames for r in records])
    frames60 = np.concatenate([r.motion.frames for r in records])
    m2d.normalizer = Normalizer.fit(frames15)
    ssr.normalizer = Normalizer.fit(frames60)
    scores = []
    for i, rec in enumerate(records):
        cond = condition_embedding(rec.audio_feature, adapter)
        low_frames = min(int(round(rec.params.duration_s * LOW_FPS)), m2d.config.max_frames)
        _, high = sample_cascade(
            M2dProvider(m2d), SsrProvider(ssr), cond, low_frames, config, sched,
            seed=seed * 77 + i,
        )
        beats = BeatGrid(rec.beats.timestamps[rec.beats.timestamps <= high.duration],
                         high.duration)
        dance = extract_dance_beats(high, skel)
        scores.append(beat_align_score(dance, beats, BAS_SIGMA_SECONDS))
    return float(np.mean(scores))
