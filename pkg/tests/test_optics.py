import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blurvitals import synth
from blurvitals.errors import ValidationError
from blurvitals.optics import blur_clip, blur_frames, disc_cell_area, disc_psf, quantize
from blurvitals.vidio import VideoClip

# 256x256 supersampled coverage of the r=1 disc, normalised; computed once with a
# midpoint grid per pixel cell, independently of the analytic cell integral.
ORACLE_R1 = {"center": 0.3183028, "edge": 0.14534805, "corner": 0.02507625}


def supersampled_psf(radius, n=256):
    half = int(np.ceil(radius))
    side = 2 * half + 1
    u = (np.arange(n) + 0.5) / n - 0.5
    taps = np.zeros((side, side))
    for i in range(side):
        for j in range(side):
            yy, xx = np.meshgrid(i - half + u, j - half + u, indexing="ij")
            taps[i, j] = np.mean(xx**2 + yy**2 <= radius**2)
    return taps / taps.sum()


def test_identity_kernel():
    k = disc_psf(0)
    assert k.side == 1
    np.testing.assert_array_equal(k.taps, [[1.0]])


@pytest.mark.parametrize("r", [0.5, 1, 3, 7.5])
def test_normalised(r):
    k = disc_psf(r)
    assert abs(k.taps.sum() - 1.0) < 1e-9
    assert k.side == 2 * int(np.ceil(r)) + 1


def test_negative_radius():
    with pytest.raises(ValidationError):
        disc_psf(-0.1)


def test_r1_against_frozen_oracle():
    t = disc_psf(1.0).taps
    assert t[1, 1] == pytest.approx(ORACLE_R1["center"], abs=2e-5)
    for v in (t[0, 1], t[1, 0], t[1, 2], t[2, 1]):
        assert v == pytest.approx(ORACLE_R1["edge"], abs=2e-5)
    for v in (t[0, 0], t[0, 2], t[2, 0], t[2, 2]):
        assert v == pytest.approx(ORACLE_R1["corner"], abs=2e-5)


@pytest.mark.parametrize("r", [0.5, 2.3, 4])
def test_matches_supersampling(r):
    np.testing.assert_allclose(disc_psf(r).taps, supersampled_psf(r, 128), atol=2e-4)


@pytest.mark.parametrize("r", [0.5, 1.0, 2.7, 6.0])
def test_cell_areas_sum_to_disc_area(r):
    half = int(np.ceil(r))
    total = sum(
        disc_cell_area(x - 0.5, x + 0.5, y - 0.5, y + 0.5, r)
        for x in range(-half, half + 1)
        for y in range(-half, half + 1)
    )
    assert total == pytest.approx(np.pi * r * r, rel=1e-12)


@pytest.mark.parametrize("r", [1, 2.5, 6])
def test_symmetry(r):
    t = disc_psf(r).taps
    np.testing.assert_allclose(t, t.T, atol=1e-12)
    np.testing.assert_allclose(t, t[::-1, ::-1], atol=1e-12)


def test_blur_identity_and_constant(small_clip):
    assert blur_clip(small_clip, disc_psf(0)) == small_clip
    flat = VideoClip(np.full((2, 20, 20), 117, np.uint8), 20.0)
    for r in (1, 3, 6):
        assert blur_clip(flat, disc_psf(r)) == flat


def test_impulse_response():
    img = np.zeros((15, 15))
    img[7, 7] = 250.0
    k = disc_psf(2)
    out = quantize(blur_frames(img, k), 8)
    expect = np.zeros((15, 15), np.uint8)
    expect[5:10, 5:10] = quantize(250.0 * k.taps, 8)
    np.testing.assert_array_equal(out, expect)


def test_kernel_larger_than_frame():
    clip = VideoClip(np.zeros((1, 8, 8), np.uint8), 20.0)
    with pytest.raises(ValidationError):
        blur_clip(clip, disc_psf(4))


def test_dc_preserved(rng):
    img = rng.uniform(50, 200, size=(64, 64))
    out = quantize(blur_frames(img, disc_psf(3)), 8).astype(float)
    assert abs(out.mean() - img.mean()) < 0.5


def _tv(img):
    return np.abs(np.diff(img, axis=0)).sum() + np.abs(np.diff(img, axis=1)).sum()


def test_total_variation_non_increasing():
    cfg = synth.SceneConfig(duration=1.0, seed=3)
    frames, _ = synth.render_frames(cfg)
    face = frames[0]
    tvs = [_tv(face if r == 0 else blur_frames(face, disc_psf(r))) for r in (0, 1, 3, 6)]
    assert all(a >= b for a, b in zip(tvs, tvs[1:]))


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), r=st.sampled_from([0.5, 1.5, 3.0]), seed=st.integers(0, 1000))
def test_linearity(a, b, r, seed):
    rng = np.random.default_rng(seed)
    f1, f2 = rng.normal(size=(2, 16, 16))
    k = disc_psf(r)
    lhs = blur_frames(a * f1 + b * f2, k)
    rhs = a * blur_frames(f1, k) + b * blur_frames(f2, k)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)
