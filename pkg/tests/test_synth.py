import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blurvitals import synth
from blurvitals.errors import ValidationError
from blurvitals.flow import trace_block
from blurvitals.grid import Block
from blurvitals.spectra import WindowPlan, power_spectra
from blurvitals.vidio import read_clip

SHORT = dict(duration=12.0, seed=5)


def _freq_peak(trace, fps):
    plan = WindowPlan(window_len=len(trace), hop=1, zero_pad_to=1 << (len(trace) - 1).bit_length() + 1)
    p = power_spectra(trace, plan)
    f = plan.freqs(fps)
    return f[np.argmax(p[1:]) + 1], f[1]


def test_validation():
    for bad in (dict(hr=700), dict(rr=2), dict(pulse_amplitude=0.2), dict(breath_amplitude=11),
                dict(fps=2.0), dict(motion_events=((5, 4, 10),)), dict(motion_events=((1, 2, 200),))):
        with pytest.raises(ValidationError):
            synth.SceneConfig(**bad).validate()


def test_layout_error_message():
    with pytest.raises(ValidationError, match="layout"):
        synth.SceneConfig(motion_events=((1, 2, 60),)).validate()


def test_static_scene_frames_identical():
    clip, _ = synth.render_scene(synth.SceneConfig(pulse_amplitude=0, breath_amplitude=0, noise_sigma=0, **SHORT))
    assert np.all(clip.data == clip.data[0])


def test_skin_mean_spectral_peak():
    cfg = synth.SceneConfig(hr=72, rr=15, noise_sigma=0, **SHORT)
    frames, truth = synth.render_frames(cfg)
    trace = frames[:, truth.skin_mask].mean(axis=1)
    trace = trace - np.polyval(np.polyfit(np.arange(len(trace)), trace, 1), np.arange(len(trace)))
    f, df = _freq_peak(trace, cfg.fps)
    assert abs(f - 1.2) <= df


def test_chest_displacement_peak():
    cfg = synth.SceneConfig(hr=72, rr=15, noise_sigma=0, duration=20.0, seed=5)
    clip, _ = synth.render_scene(cfg)
    _, (x0, y0, _, _) = cfg.boxes()
    tr = trace_block(clip, Block(x0 + 8, y0 + 8, 32, 0))
    f, df = _freq_peak(np.cumsum(tr.dx), cfg.fps)
    assert abs(f - 0.25) <= df


def test_covered_chest_texture_and_spectrum():
    peaks, contrast = [], []
    for covered in (False, True):
        cfg = synth.SceneConfig(hr=72, rr=15, duration=20.0, seed=5, covered=covered)
        clip, truth = synth.render_scene(cfg)
        _, (x0, y0, _, _) = cfg.boxes()
        b = Block(x0 + 8, y0 + 8, 32, 0)
        contrast.append(clip.data[0][b.region()].astype(float).std())
        peaks.append(_freq_peak(np.cumsum(trace_block(clip, b).dx), cfg.fps)[0])
    assert contrast[1] < contrast[0]
    assert peaks[0] == peaks[1]


def test_event_mask_frames():
    cfg = synth.SceneConfig(motion_events=((3.0, 4.0, 20.0),), **SHORT)
    _, truth = synth.render_frames(cfg)
    idx = np.flatnonzero(truth.motion_event_mask)
    assert idx[0] == 60 and idx[-1] == 79 and len(idx) == 20


def test_truth_lengths_and_round_trip():
    cfg = synth.SceneConfig(hr=80, rr=12, duration=60.0, seed=1)
    frames, truth = synth.render_frames(synth.SceneConfig(hr=80, rr=12, **SHORT))
    assert len(truth.hr_bpm) == len(truth.rr_bpm) == WindowPlan().count(240) == 3
    back = synth.GroundTruth.from_json(truth.to_json())
    for name in ("t_s", "hr_bpm", "rr_bpm", "motion_event_mask", "skin_mask", "chest_mask"):
        np.testing.assert_array_equal(getattr(back, name), getattr(truth, name))
    assert cfg.n_frames == 1200


@settings(max_examples=30, deadline=None)
@given(st.lists(st.booleans(), max_size=60), st.integers(1, 5))
def test_rle_round_trip(bits, cols):
    n = len(bits) - len(bits) % cols
    mask = np.array(bits[:n], dtype=bool).reshape(-1, cols)
    np.testing.assert_array_equal(synth.rle_decode(synth.rle_encode(mask)), mask)


def test_determinism():
    cfg = synth.SceneConfig(covered=True, posture_deg=60, **SHORT)
    a, ta = synth.render_scene(cfg)
    b, tb = synth.render_scene(cfg)
    assert a == b and ta.to_json() == tb.to_json()


def test_posture_projection():
    assert synth.breath_direction(0) == pytest.approx((1.0, 0.0))
    ux, uy = synth.breath_direction(90)
    assert abs(ux) < 1e-12 and uy == pytest.approx(0.3)


def test_condition_suite(tmp_path):
    base = synth.SceneConfig(duration=10.0, seed=3)
    entries = synth.render_condition_suite(base, 3, [3], tmp_path / "a")
    assert len(entries) == 12
    manifest = synth.load_manifest(tmp_path / "a" / "manifest.json")
    assert len(manifest) == 12
    for e in manifest:
        assert read_clip(e["clip"]) is not None
        synth.GroundTruth.load(e["truth"])
        assert set(e["condition"]) == {"covered", "blur_radius", "posture_deg"}
    synth.render_condition_suite(base, 3, [3], tmp_path / "b")
    for p in sorted((tmp_path / "a").iterdir()):
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()


def test_suite_rates_and_errors(tmp_path):
    base = synth.SceneConfig(duration=10.0, seed=3)
    entries = synth.render_condition_suite(base, 2, [], tmp_path, rates=[(60, 10), (90, 20)], covers=(False,))
    assert len(entries) == 2
    hr = [synth.GroundTruth.load(tmp_path / e["truth"]).hr_bpm[0] for e in entries]
    assert hr == [60, 90]
    with pytest.raises(ValidationError):
        synth.render_condition_suite(base, 0, [], tmp_path)
    with pytest.raises(ValidationError):
        synth.render_condition_suite(base, 2, [], tmp_path, rates=[(60, 10)])
    json.loads((tmp_path / "manifest.json").read_text())
