"""Run configuration: flat key=value files mapped onto one dataclass.

The file format is deliberately simple: one ``key = value`` pair per line,
``#`` starts a comment, blank lines ignored. Types are coerced from the
dataclass defaults; unknown keys are an error.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .denoiser import DenoiserConfig
from .diffusion import build_schedule
from .losses import LossWeights
from .synthetic import GeneratorConfig


@dataclass
class RunConfig:
    # dataset
    data_clips: int = 64
    data_align_clips: int = 256
    data_holdout_clips: int = 64
    data_tempo_min: float = 90.0
    data_tempo_max: float = 150.0
    data_duration_min: float = 4.0
    data_duration_max: float = 8.0
    data_amp_min: float = 0.6
    data_amp_max: float = 1.0
    skeleton: str = "desk9"

    # diffusion
    schedule_kind: str = "cosine"
    train_timesteps: int = 1000
    inference_steps: int = 100
    guidance_weight: float = 2.5
    sigma_mode: str = "beta"
    cond_dropout: float = 0.1

    # losses
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    loss_alpha: float = 0.1

    # SSR conditioning augmentation (fractions of train_timesteps)
    ssr_s_max_frac: float = 0.4
    ssr_s_infer_frac: float = 0.3

    # base (music-to-dance) stage, 15 fps
    m2d_layers: int = 3
    m2d_hidden: int = 64
    m2d_heads: int = 2
    m2d_mlp_ratio: int = 2
    m2d_dropout: float = 0.0
    m2d_frames: int = 60  # training window and max generation length (15 fps)
    m2d_steps: int = 900
    m2d_batch: int = 8
    m2d_lr: float = 1e-3

    # super-resolution stage, 60 fps
    ssr_layers: int = 2
    ssr_hidden: int = 48
    ssr_heads: int = 1
    ssr_mlp_ratio: int = 2
    ssr_dropout: float = 0.0
    ssr_window: int = 240
    ssr_steps: int = 400
    ssr_batch: int = 4
    ssr_lr: float = 1e-3

    # alignment stage
    align_epochs: int = 300
    align_lr: float = 2e-3
    align_batch: int = 32

    weight_decay: float = 0.0
    seed: int = 0

    # -- derived helpers -----------------------------------------------------

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(
            tempo_range=(self.data_tempo_min, self.data_tempo_max),
            duration_range=(self.data_duration_min, self.data_duration_max),
            amp_range=(self.data_amp_min, self.data_amp_max),
            skeleton=self.skeleton,
        )

    def loss_weights(self) -> LossWeights:
        return LossWeights(
            lambda1=self.lambda1, lambda2=self.lambda2, lambda3=self.lambda3,
            alpha=self.loss_alpha,
        )

    def schedule(self):
        return build_schedule(self.train_timesteps, self.schedule_kind)

    def m2d_config(self, frame_width: int) -> DenoiserConfig:
        return DenoiserConfig(
            frame_width=frame_width, layers=self.m2d_layers, hidden_dim=self.m2d_hidden,
            heads=self.m2d_heads, dropout=self.m2d_dropout, max_frames=self.m2d_frames,
            mlp_ratio=self.m2d_mlp_ratio,
        )

    def ssr_config(self, frame_width: int) -> DenoiserConfig:
        return DenoiserConfig(
            frame_width=frame_width, layers=self.ssr_layers, hidden_dim=self.ssr_hidden,
            heads=self.ssr_heads, dropout=self.ssr_dropout, max_frames=self.ssr_window,
            mlp_ratio=self.ssr_mlp_ratio, ssr=True,
        )

    @property
    def ssr_s_max(self) -> int:
        return int(round(self.ssr_s_max_frac * self.train_timesteps))

    @property
    def ssr_s_infer(self) -> int:
        return int(round(self.ssr_s_infer_frac * self.train_timesteps))


def _coerce(raw: str, default):
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"bad boolean {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Parse a key=value config file; ``overrides`` replace parsed values."""
    defaults = {f.name: f.default for f in fields(RunConfig)}
    values: dict = {}
    if path is not None:
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in defaults:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _coerce(raw, defaults[key])
    cfg = RunConfig(**values)
    if overrides:
        cfg = replace(cfg, **overrides)
    return cfg


def save_config(cfg: RunConfig, path) -> None:
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in fields(RunConfig)]
    Path(path).write_text("\n".join(lines) + "\n")
