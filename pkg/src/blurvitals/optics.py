"""Defocus blur as a uniform disc point-spread function."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .errors import ValidationError
from .vidio import VideoClip


@dataclass(frozen=True, eq=False)
class PsfKernel:
    radius: float
    taps: np.ndarray

    @property
    def side(self) -> int:
        return self.taps.shape[0]


def _chord_integral(x, r):
    # antiderivative of sqrt(r^2 - x^2)
    x = min(max(x, -r), r)
    return 0.5 * (x * math.sqrt(max(r * r - x * x, 0.0)) + r * r * math.asin(x / r))


def disc_cell_area(x0, x1, y0, y1, r):
    """Exact area of the disc of radius ``r`` at the origin inside a rectangle."""
    lo, hi = max(x0, -r), min(x1, r)
    if hi <= lo:
        return 0.0
    cuts = {lo, hi}
    for y in (y0, y1):
        if abs(y) < r:
            xc = math.sqrt(r * r - y * y)
            cuts.update(c for c in (-xc, xc) if lo < c < hi)
    cuts = sorted(cuts)
    area = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        m = 0.5 * (a + b)
        s = math.sqrt(max(r * r - m * m, 0.0))
        top_is_chord = s <= y1
        bottom_is_chord = -s >= y0
        top = _chord_integral(b, r) - _chord_integral(a, r) if top_is_chord else y1 * (b - a)
        bottom = -(_chord_integral(b, r) - _chord_integral(a, r)) if bottom_is_chord else y0 * (b - a)
        if min(s, y1) > max(-s, y0):
            area += top - bottom
    return area


def disc_psf(radius: float) -> PsfKernel:
    """Uniform disc kernel, each tap the exact disc coverage of its pixel cell.

    The side length is ``2*ceil(radius) + 1`` and the taps sum to one.
    """
    if not radius >= 0:
        raise ValidationError(f"blur radius must be non-negative, got {radius}")
    half = math.ceil(radius)
    if radius == 0:
        return PsfKernel(0.0, np.ones((1, 1)))
    side = 2 * half + 1
    taps = np.zeros((side, side))
    for i in range(side):
        for j in range(side):
            y, x = i - half, j - half
            taps[i, j] = disc_cell_area(x - 0.5, x + 0.5, y - 0.5, y + 0.5, radius)
    taps /= taps.sum()
    return PsfKernel(float(radius), taps)


def blur_frames(frames: np.ndarray, psf: PsfKernel) -> np.ndarray:
    """Convolve each frame with ``psf`` using replicate-edge padding.

    Works on a real-valued copy and returns float64; accepts (H, W) or
    (T, H, W) input.
    """
    frames = np.asarray(frames, dtype=np.float64)
    single = frames.ndim == 2
    if single:
        frames = frames[None]
    k = psf.side
    if k > min(frames.shape[1:]):
        raise ValidationError(f"kernel side {k} exceeds frame size {frames.shape[2]}x{frames.shape[1]}")
    if k == 1:
        out = frames * psf.taps[0, 0]
    else:
        h = k // 2
        padded = np.pad(frames, ((0, 0), (h, h), (h, h)), mode="edge")
        out = signal.fftconvolve(padded, psf.taps[None], mode="valid", axes=(1, 2))
    return out[0] if single else out


def quantize(values: np.ndarray, bit_depth: int) -> np.ndarray:
    dtype = np.uint8 if bit_depth == 8 else np.uint16
    return np.clip(np.rint(values), 0, 2**bit_depth - 1).astype(dtype)


def blur_clip(clip: VideoClip, psf: PsfKernel) -> VideoClip:
    """Blur every frame, quantizing once at the output."""
    if psf.side == 1 and psf.taps[0, 0] == 1.0:
        return clip
    if len(clip) == 0:
        if psf.side > min(clip.width, clip.height):
            raise ValidationError(f"kernel side {psf.side} exceeds frame size")
        return clip
    out = blur_frames(clip.data, psf)
    return VideoClip(quantize(out, clip.bit_depth), clip.fps, clip.bit_depth, clip.label)
