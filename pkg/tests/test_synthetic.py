import numpy as np
import pytest

from cadence.metrics import extract_dance_beats
from cadence.motion import skeleton_preset
from cadence.synthetic import (
    ClipParams,
    GeneratorConfig,
    encode_audio_feature,
    generate_clip,
    generate_synthetic_clip,
)


def test_beat_count_arithmetic():
    params = ClipParams(tempo_bpm=120.0, duration_s=4.0, phase_frac=0.25, genre=0, amp=0.8)
    clip = generate_clip(params, skeleton_preset("desk9"))
    # 0.5 s spacing, first beat at 0.125 s -> beats at 0.125 + 0.5 k < 4.0
    assert len(clip.beats) == 8
    assert np.allclose(np.diff(clip.beats.timestamps), 0.5)
    assert abs(clip.beats.timestamps[0] - 0.125) < 1e-12


def test_same_seed_bit_identical():
    cfg = GeneratorConfig()
    a = generate_synthetic_clip(cfg, 1234)
    b = generate_synthetic_clip(cfg, 1234)
    assert np.array_equal(a.motion.frames, b.motion.frames)
    assert np.array_equal(a.audio_feature, b.audio_feature)
    assert np.array_equal(a.beats.timestamps, b.beats.timestamps)


def test_distinct_seeds_differ():
    cfg = GeneratorConfig()
    a = generate_synthetic_clip(cfg, 1)
    b = generate_synthetic_clip(cfg, 2)
    assert not np.array_equal(a.motion.frames, b.motion.frames)


def test_extracted_beats_match_ground_truth_within_one_frame():
    cfg = GeneratorConfig()
    skel = skeleton_preset("desk9")
    for seed in range(12):
        clip = generate_synthetic_clip(cfg, seed)
        found = extract_dance_beats(clip.motion, skel).timestamps
        truth = clip.beats.timestamps
        assert len(found) > 0
        # every extracted beat sits within one frame of a true beat
        d = np.abs(found[:, None] - truth[None, :]).min(axis=1)
        assert d.max() <= 1.0 / 60.0 + 1e-9
        # every interior true beat is recovered
        interior = truth[(truth > 2.0 / 60.0) & (truth < clip.motion.duration - 2.0 / 60.0)]
        d2 = np.abs(interior[:, None] - found[None, :]).min(axis=1)
        assert d2.max() <= 1.0 / 60.0 + 1e-9


def test_out_of_range_params_rejected():
    with pytest.raises(ValueError):
        GeneratorConfig(tempo_range=(30.0, 90.0)).validate()
    with pytest.raises(ValueError):
        GeneratorConfig(duration_range=(1.0, 3.0)).validate()


def test_audio_feature_encodes_tempo_and_phase():
    p1 = ClipParams(100.0, 5.0, 0.3, 1, 0.7)
    p2 = ClipParams(140.0, 5.0, 0.3, 1, 0.7)
    f1, f2 = encode_audio_feature(p1), encode_audio_feature(p2)
    assert f1.shape == f2.shape
    assert not np.array_equal(f1, f2)
    # re-phasing by a whole oscillator period (2 beats) is a no-op
    f3 = encode_audio_feature(p1, t_offset_s=2.0 * p1.beat_period)
    assert np.abs(f1 - f3).max() < 1e-9


def test_window_rephasing_matches_cropped_clip():
    """A re-phased feature describes exactly the cropped motion."""
    skel = skeleton_preset("desk9")
    p = ClipParams(tempo_bpm=120.0, duration_s=6.0, phase_frac=0.4, genre=2, amp=0.9)
    clip = generate_clip(p, skel)
    # crop at exactly one oscillator period (= 2 beats = 1 s = 60 frames)
    offset_frames = 60
    p_shifted = ClipParams(
        tempo_bpm=120.0, duration_s=5.0, phase_frac=0.4, genre=2, amp=0.9
    )
    shifted = generate_clip(p_shifted, skel)
    crop = clip.motion.frames[offset_frames : offset_frames + shifted.motion.length]
    assert np.abs(crop - shifted.motion.frames[: crop.shape[0]]).max() < 1e-9
