"""Synthetic paired clips: rhythmic motion with a known beat grid.

Each clip is a smooth multi-joint oscillation driven by one shared phase
oscillator. Joint angles follow ``A_j * cos(theta(t))`` where ``theta``
advances by pi per beat, so every joint's angular velocity (and therefore
the summed kinetic velocity) hits zero exactly on the beat grid. The paired
"audio" is a fixed-length feature vector that deterministically encodes
tempo, oscillator phase, amplitude, and a genre id, standing in for real
audio analysis at desk scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .motion import BeatGrid, MotionSequence, SkeletonSpec, skeleton_preset
from .rng import SplitMix64

AUDIO_FEATURE_DIM = 16
GENRE_COUNT = 4
TEMPO_RANGE = (60.0, 180.0)
DURATION_RANGE = (4.0, 20.0)

# Per-joint swing emphasis for the desk skeletons (root handled separately,
# pattern tiled/truncated for other joint counts). Rows are genres.
_GENRE_PATTERNS = np.array(
    [
        [0.9, 1.0, 0.9, 1.0, 0.5, 0.6, 0.5, 0.6],  # footwork-heavy
        [0.4, 0.5, 0.4, 0.5, 1.0, 0.9, 1.0, 0.9],  # arm-led
        [0.8, 0.6, 0.8, 0.6, 0.8, 0.6, 0.8, 0.6],  # even sway
        [1.0, 0.3, 0.3, 1.0, 0.3, 1.0, 1.0, 0.3],  # syncopated accents
    ]
)

# Rotation axis per non-root joint, cycling x/z so limbs swing in varied planes.
_AXES = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class ClipParams:
    """Concrete parameters of one synthetic clip (fully determine the clip)."""

    tempo_bpm: float
    duration_s: float
    phase_frac: float  # first-beat offset in beat-period units, [0, 1)
    genre: int
    amp: float  # global amplitude scale, (0, 1]

    @property
    def beat_period(self) -> float:
        return 60.0 / self.tempo_bpm

    def theta_at(self, t_s: float) -> float:
        """Shared oscillator phase (radians); advances by pi per beat."""
        return math.pi * (t_s / self.beat_period - self.phase_frac)


@dataclass(frozen=True)
class GeneratorConfig:
    tempo_range: tuple[float, float] = (90.0, 150.0)
    duration_range: tuple[float, float] = (4.0, 8.0)
    amp_range: tuple[float, float] = (0.6, 1.0)
    phase_range: tuple[float, float] = (0.1, 0.9)
    skeleton: str = "desk9"

    def validate(self) -> None:
        lo, hi = self.tempo_range
        if not (TEMPO_RANGE[0] <= lo <= hi <= TEMPO_RANGE[1]):
            raise ValueError(f"tempo range {self.tempo_range} outside {TEMPO_RANGE}")
        lo, hi = self.duration_range
        if not (DURATION_RANGE[0] <= lo <= hi <= DURATION_RANGE[1]):
            raise ValueError(f"duration range {self.duration_range} outside {DURATION_RANGE}")
        lo, hi = self.amp_range
        if not (0.0 < lo <= hi <= 1.0):
            raise ValueError(f"amp range {self.amp_range} invalid")


@dataclass(frozen=True)
class SyntheticClip:
    motion: MotionSequence  # 60 fps
    audio_feature: np.ndarray  # [AUDIO_FEATURE_DIM]
    beats: BeatGrid
    params: ClipParams


def joint_amplitudes(params: ClipParams, joint_count: int) -> np.ndarray:
    """Per-joint swing amplitude in radians for joints 1..J-1."""
    pattern = _GENRE_PATTERNS[params.genre]
    reps = int(np.ceil((joint_count - 1) / pattern.size))
    tiled = np.tile(pattern, reps)[: joint_count - 1]
    return 0.5 * params.amp * tiled


def encode_audio_feature(params: ClipParams, t_offset_s: float = 0.0) -> np.ndarray:
    """Deterministic stand-in audio features.

    ``t_offset_s`` re-phases the encoding as if the clip started there,
    which lets trainers crop windows while keeping features consistent.
    """
    theta0 = params.theta_at(t_offset_s)
    onehot = np.zeros(GENRE_COUNT)
    onehot[params.genre] = 1.0
    pattern = _GENRE_PATTERNS[params.genre] * params.amp
    feat = np.concatenate(
        [
            [params.tempo_bpm / TEMPO_RANGE[1], math.sin(theta0), math.cos(theta0), params.amp],
            onehot,
            pattern,
        ]
    )
    assert feat.size == AUDIO_FEATURE_DIM
    return feat


def _axis_angle_rot6d(axis: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Rotation about a fixed unit axis -> rot6d channels, [T] -> [T, 6].

    Rodrigues' formula specialized to a constant axis; the first two matrix
    columns are returned directly.
    """
    x, y, z = axis
    c = np.cos(angles)
    s = np.sin(angles)
    one_c = 1.0 - c
    # full rotation matrix entries (column-major columns 0 and 1)
    col0 = np.stack([c + x * x * one_c, y * x * one_c + z * s, z * x * one_c - y * s], axis=-1)
    col1 = np.stack([x * y * one_c - z * s, c + y * y * one_c, z * y * one_c + x * s], axis=-1)
    return np.concatenate([col0, col1], axis=-1)


def generate_clip(params: ClipParams, skel: SkeletonSpec) -> SyntheticClip:
    """Build the deterministic clip for ``params`` at 60 fps."""
    fps = 60
    length = int(round(params.duration_s * fps))
    t = np.arange(length) / fps
    theta = np.pi * (t / params.beat_period - params.phase_frac)

    j_count = skel.joint_count
    amps = joint_amplitudes(params, j_count)
    frames = np.zeros((length, skel.frame_width))

    # root yaw sways with the same oscillator so its velocity also stills on beats
    root_angles = 0.25 * params.amp * np.cos(theta)
    frames[:, 0:6] = _axis_angle_rot6d(np.array([0.0, 1.0, 0.0]), root_angles)
    for j in range(1, j_count):
        axis = _AXES[j % 2]
        angles = amps[j - 1] * np.cos(theta)
        frames[:, j * 6 : j * 6 + 6] = _axis_angle_rot6d(axis, angles)

    # gentle vertical bob; root translation is excluded from kinetic velocity
    frames[:, j_count * 6 + 1] = 0.9 + 0.02 * params.amp * np.cos(theta)

    beats = []
    k = 0
    while True:
        tb = (params.phase_frac + k) * params.beat_period
        if tb >= params.duration_s - 1e-9:
            break
        beats.append(tb)
        k += 1
    return SyntheticClip(
        motion=MotionSequence(fps=fps, frames=frames),
        audio_feature=encode_audio_feature(params),
        beats=BeatGrid(timestamps=np.array(beats), duration=params.duration_s),
        params=params,
    )


def sample_clip_params(config: GeneratorConfig, seed: int) -> ClipParams:
    config.validate()
    rng = SplitMix64(seed)
    lo, hi = config.tempo_range
    tempo = lo + (hi - lo) * rng.uniform()
    lo, hi = config.duration_range
    duration = lo + (hi - lo) * rng.uniform()
    lo, hi = config.phase_range
    phase = lo + (hi - lo) * rng.uniform()
    genre = rng.randint(0, GENRE_COUNT)
    lo, hi = config.amp_range
    amp = lo + (hi - lo) * rng.uniform()
    return ClipParams(
        tempo_bpm=tempo, duration_s=duration, phase_frac=phase, genre=genre, amp=amp
    )


def generate_synthetic_clip(config: GeneratorConfig, seed: int) -> SyntheticClip:
    """Sample clip parameters from ``seed`` and build the clip."""
    params = sample_clip_params(config, seed)
    return generate_clip(params, skeleton_preset(config.skeleton))
