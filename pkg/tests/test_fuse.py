import math

import numpy as np
import pytest

from blurvitals import synth
from blurvitals.errors import DataError, ValidationError
from blurvitals.fuse import (
    MOTION_RR,
    PPG_HR,
    FuseConfig,
    GatingConfig,
    SnrHeatmap,
    VitalEstimate,
    build_heatmap,
    combine_global,
    estimate_window,
    motion_metric,
    select_roi,
    window_heatmaps,
)
from blurvitals.optics import blur_frames, disc_psf
from blurvitals.pipeline import PipelineConfig, analyze_clip
from blurvitals.spectra import HR_BAND, WindowPlan, power_spectra, snr_db_array
from blurvitals.vidio import VideoClip

FPS = 20.0
PLAN = WindowPlan()
T = np.arange(200) / FPS
CFG = PipelineConfig()


def heat(values):
    return SnrHeatmap(0, np.asarray(values, dtype=float), PPG_HR)


def test_select_roi_examples():
    assert select_roi(heat([-5, 3, -1, 9, 1, -20]), k=10, min_snr=0.0) == (3, 1, 4)
    assert select_roi(heat([-3.0] * 8), k=10, min_snr=0.0) == ()
    assert select_roi(heat([2, 5, 5, 1]), k=2) == (1, 2)
    with pytest.raises(ValidationError):
        select_roi(heat([1.0]), k=0)


def test_combine_examples(rng):
    a = np.sin(2 * np.pi * 1.1 * T)
    np.testing.assert_allclose(combine_global(a[None], [7.0]), a - a.mean(), atol=1e-12)
    np.testing.assert_allclose(combine_global(np.stack([a, a]), [1.0, 20.0]), a - a.mean(), atol=1e-12)
    assert combine_global(np.empty((0, 200)), []) is None
    with pytest.raises(ValidationError):
        combine_global(np.stack([a, a]), [1.0])


def test_combine_clean_and_noisy():
    rng = np.random.default_rng(17)
    clean = np.sin(2 * np.pi * 1.1 * T) + 0.1 * rng.normal(size=200)
    noisy = np.sin(2 * np.pi * 1.1 * T) + 1.5 * rng.normal(size=200)
    freqs = PLAN.freqs(FPS)
    hw = 2 * FPS / PLAN.window_len
    snr = snr_db_array(power_spectra(np.stack([clean, noisy]), PLAN), freqs, HR_BAND, True, hw)
    g = combine_global(np.stack([clean, noisy]), snr)
    g_snr = snr_db_array(power_spectra(g, PLAN), freqs, HR_BAND, True, hw)
    assert g_snr >= snr[1]


def test_sign_alignment():
    a = np.sin(2 * np.pi * 0.3 * T)
    assert np.allclose(combine_global(np.stack([a, -a]), [10.0, 10.0]), 0.0)
    aligned = combine_global(np.stack([a, -a]), [10.0, 9.0], align_sign=True)
    np.testing.assert_allclose(aligned, a - a.mean(), atol=1e-12)


def test_motion_metric_examples():
    assert motion_metric(np.zeros(50)) == 0.0
    assert motion_metric(np.tile([0.0, 2.0], 50)) == pytest.approx(1.0)
    x, y = np.array([0, 3.0]), np.array([0, 4.0])
    assert motion_metric(x, y) == pytest.approx(math.hypot(x.std(), y.std()))
    with pytest.raises(ValidationError):
        motion_metric([])


def test_gating_config():
    with pytest.raises(ValidationError):
        GatingConfig(0.0)
    with pytest.raises(ValidationError):
        FuseConfig(roi_k=0)


def test_heatmap_incomplete_input():
    freqs = PLAN.freqs(FPS)
    p = np.ones((4, len(freqs)))
    with pytest.raises(DataError):
        build_heatmap(p, freqs, HR_BAND, MOTION_RR, PLAN, FPS)
    bad = p.copy()
    bad[2, 5] = np.nan
    with pytest.raises(DataError):
        build_heatmap(bad, freqs, HR_BAND, PPG_HR, PLAN, FPS)
    m = build_heatmap(np.stack([p, p]), freqs, HR_BAND, MOTION_RR, PLAN, FPS)
    assert m.snr.shape == (4,) and m.axis.shape == (4,)


def test_heatmap_floor_and_axis():
    freqs = PLAN.freqs(FPS)
    tone = power_spectra(np.sin(2 * np.pi * 0.3 * T), PLAN)
    noise = power_spectra(np.random.default_rng(4).normal(size=200), PLAN)
    m = build_heatmap(np.stack([[tone, noise], [noise, tone]]), freqs, FuseConfig().rr_band, MOTION_RR, PLAN, FPS)
    assert m.axis.tolist() == [0, 1]
    assert np.all(m.snr >= -40)
    ppg = build_heatmap(np.stack([tone, noise]), freqs, HR_BAND, PPG_HR, PLAN, FPS, usable=np.array([True, False]))
    assert ppg.snr[1] == -40.0


def test_record_schema():
    e = VitalEstimate(3, 11.5, None, None, -2.0, 4.0, True, 3.2)
    assert e.record() == {"window_index": 3, "t_center_s": 11.5, "hr_quality_db": -2.0, "rr_quality_db": 4.0,
                          "gated": True, "motion_intensity": 3.2}
    e = VitalEstimate(0, 5.0, 72.1, 15.2, 9.0, 12.0, False, 0.1)
    assert list(e.record()) == ["window_index", "t_center_s", "hr_bpm", "rr_bpm", "hr_quality_db",
                                "rr_quality_db", "gated", "motion_intensity"]


@pytest.fixture(scope="module")
def scene():
    cfg = synth.SceneConfig(duration=30.0, hr=72, rr=15, seed=7, motion_events=((20.0, 21.0, 20.0),))
    clip, truth = synth.render_scene(cfg)
    return cfg, truth, analyze_clip(clip, CFG)


def test_estimate_on_clear_scene(scene):
    cfg, truth, an = scene
    for w in range(0, 10):
        e = estimate_window(an.window(w), CFG.fuse)
        assert not e.gated
        assert abs(e.hr_bpm - 72) <= 1.2 and abs(e.rr_bpm - 15) <= 1.2
        assert CFG.fuse.hr_band.lo * 60 <= e.hr_bpm <= CFG.fuse.hr_band.hi * 60


def test_event_windows_gated(scene):
    _, _, an = scene
    for w in range(11, 21):
        e = estimate_window(an.window(w), CFG.fuse)
        assert e.gated and e.hr_bpm is None and e.rr_bpm is None
        assert e.motion_intensity > 1.0


def test_k1_roi_in_masks(scene):
    _, truth, an = scene
    skin = an.grid.coverage(truth.skin_mask)
    chest = an.grid.coverage(truth.chest_mask)
    ppg, rr = window_heatmaps(an.window(0), CFG.fuse)
    (hb,) = select_roi(ppg, k=1)
    assert skin[hb] > 0.5
    (rb,) = select_roi(rr, k=1)
    assert chest[rb] > 0.5


def test_roi_stability(scene):
    _, _, an = scene
    sets = [set(select_roi(window_heatmaps(an.window(w), CFG.fuse)[0], 10)) for w in range(10)]
    jac = [len(a & b) / len(a | b) for a, b in zip(sets, sets[1:])]
    assert np.mean(jac) >= 0.5


@pytest.fixture(scope="module")
def noise_clip():
    rng = np.random.default_rng(99)
    data = np.clip(np.rint(100 + rng.normal(0, 2, (200, 160, 128))), 0, 255).astype(np.uint8)
    return analyze_clip(VideoClip(data, FPS), CFG)


@pytest.mark.xfail(reason="max of ~100 noise-only block SNRs sits near +3 dB; see decisions ledger", strict=False)
def test_all_noise_heatmap_below_threshold(noise_clip):
    ppg, rr = window_heatmaps(noise_clip.window(0), CFG.fuse)
    assert ppg.snr.max() < CFG.fuse.min_snr_db and rr.snr.max() < CFG.fuse.min_snr_db


@pytest.mark.xfail(reason="RR signal region spans 2/3 of the band, noise scores above 0 dB; see ledger", strict=False)
def test_all_noise_estimate(noise_clip):
    e = estimate_window(noise_clip.window(0), CFG.fuse)
    assert e.hr_bpm is None or e.hr_quality < 0
    assert e.rr_bpm is None or e.rr_quality < 0


def test_blur_orders_hr_quality():
    means = {0: [], 3: [], 6: []}
    for seed in (7, 8, 9):
        cfg = synth.SceneConfig(duration=20.0, seed=seed, dc_scale=0.6, noise_sigma=2.0, pulse_amplitude=0.002, hr=66, rr=13)
        frames, _ = synth.render_frames(cfg)
        for r in means:
            img = frames if r == 0 else blur_frames(frames, disc_psf(r))
            an = analyze_clip(synth.expose(cfg, img), CFG)
            means[r] += [estimate_window(an.window(w), CFG.fuse).hr_quality for w in range(an.n_windows)]
    q = {r: np.mean(v) for r, v in means.items()}
    assert q[0] >= q[3] >= q[6]
