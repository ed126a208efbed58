"""Sliding-window power spectra, band peaks and SNR.

Spectra are one-sided ``|rfft|**2`` of mean-removed, Hann-tapered,
zero-padded windows. Most functions here take the power along the last axis
so that a whole (blocks x windows x bins) stack is processed in one call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InsufficientDataError, ValidationError

SNR_FLOOR_DB = -40.0
SNR_CEIL_DB = 100.0
SIGNAL_HALF_WIDTH_BINS = 2


@dataclass(frozen=True)
class WindowPlan:
    window_len: int = 200
    hop: int = 20
    zero_pad_to: int = 2048

    def __post_init__(self):
        if self.window_len < 2 or self.hop < 1:
            raise ValidationError(f"window length and hop must be positive: {self}")
        if self.hop > self.window_len:
            raise ValidationError(f"hop {self.hop} exceeds window length {self.window_len}")
        n = self.zero_pad_to
        if n < self.window_len or n & (n - 1):
            raise ValidationError(f"zero_pad_to must be a power of two >= window length, got {n}")

    @classmethod
    def from_seconds(cls, window_sec, hop_sec, fps, zero_pad_to=None):
        window_len = int(round(window_sec * fps))
        hop = max(1, int(round(hop_sec * fps)))
        if zero_pad_to is None:
            zero_pad_to = max(2048, 1 << max(window_len - 1, 1).bit_length())
        return cls(window_len, hop, zero_pad_to)

    def count(self, n_samples: int) -> int:
        if n_samples < self.window_len:
            return 0
        return (n_samples - self.window_len) // self.hop + 1

    def starts(self, n_samples: int) -> np.ndarray:
        return np.arange(self.count(n_samples)) * self.hop

    def freqs(self, fps: float) -> np.ndarray:
        return np.fft.rfftfreq(self.zero_pad_to, d=1.0 / fps)

    def resolution_hz(self, fps: float) -> float:
        """Spacing of independent frequency samples (before zero padding)."""
        return fps / self.window_len


@dataclass(frozen=True)
class Band:
    lo: float
    hi: float

    def validate(self, fps: float | None = None) -> "Band":
        if not 0 < self.lo < self.hi:
            raise ValidationError(f"band needs 0 < lo < hi, got [{self.lo}, {self.hi}]")
        if fps is not None and self.hi > fps / 2 + 1e-12:
            raise ValidationError(f"band upper edge {self.hi} Hz above Nyquist {fps / 2} Hz")
        return self

    @classmethod
    def parse(cls, text: str) -> "Band":
        """Parse ``"lo,hi"`` in Hz."""
        try:
            lo, hi = (float(v) for v in text.split(","))
        except ValueError as exc:
            raise ValidationError(f"band must be 'lo,hi' in Hz, got {text!r}") from exc
        return cls(lo, hi).validate()


HR_BAND = Band(0.70, 3.00)
RR_BAND = Band(0.10, 0.70)


@dataclass(frozen=True, eq=False)
class Spectrum:
    freqs: np.ndarray
    power: np.ndarray
    window_index: int
    source: str
    fps: float
    window_len: int


def frame_windows(trace: np.ndarray, plan: WindowPlan) -> np.ndarray:
    """Overlapping windows of the last axis, shape (..., n_windows, window_len)."""
    trace = np.asarray(trace, dtype=np.float64)
    n = trace.shape[-1]
    if n < plan.window_len:
        raise InsufficientDataError(
            f"trace has {n} samples, one window needs {plan.window_len}", required=plan.window_len
        )
    view = sliding_window_view(trace, plan.window_len, axis=-1)
    return view[..., :: plan.hop, :][..., : plan.count(n), :]


def power_spectra(segments: np.ndarray, plan: WindowPlan) -> np.ndarray:
    """Mean-removed, Hann-tapered, zero-padded ``|rfft|**2`` along the last axis."""
    segments = np.asarray(segments, dtype=np.float64)
    x = segments - segments.mean(axis=-1, keepdims=True)
    x = x * np.hanning(segments.shape[-1])
    spec = np.fft.rfft(x, n=plan.zero_pad_to, axis=-1)
    return spec.real**2 + spec.imag**2


def windowed_spectrum(trace, plan: WindowPlan, fps: float, source: str = "ppg") -> list[Spectrum]:
    segs = frame_windows(trace, plan)
    power = power_spectra(segs, plan)
    freqs = plan.freqs(fps)
    return [Spectrum(freqs, p, i, source, fps, plan.window_len) for i, p in enumerate(power)]


def _band_mask(freqs, band: Band):
    mask = (freqs >= band.lo) & (freqs <= band.hi)
    if mask.sum() < 3:
        raise ValidationError(f"band [{band.lo}, {band.hi}] Hz holds fewer than 3 spectral bins")
    return mask


def band_peak_index(power: np.ndarray, freqs: np.ndarray, band: Band) -> np.ndarray:
    """Index of the strongest in-band bin; ties go to the lower frequency."""
    mask = _band_mask(freqs, band)
    idx = np.flatnonzero(mask)
    return idx[0] + np.argmax(power[..., mask], axis=-1)


def band_peak(spec: Spectrum, band: Band) -> tuple[float, float]:
    """Peak frequency in Hz and the matching rate per minute."""
    f = float(spec.freqs[band_peak_index(spec.power, spec.freqs, band)])
    return f, f * 60.0


def snr_db_array(power, freqs, band: Band, include_harmonic: bool, half_width_hz: float) -> np.ndarray:
    """SNR in dB of the in-band peak against the rest of the band.

    The signal is the in-band power within ``half_width_hz`` of the peak,
    plus (optionally) the power within the same distance of twice the peak
    frequency when that lies at or below Nyquist. Noise is the remaining
    in-band power.
    """
    power = np.asarray(power, dtype=np.float64)
    mask = _band_mask(freqs, band)
    peak = band_peak_index(power, freqs, band)
    fpk = freqs[peak][..., None]
    near = np.abs(freqs - fpk) <= half_width_hz + 1e-12
    sig_mask = near & mask
    if include_harmonic:
        harm = (np.abs(freqs - 2 * fpk) <= half_width_hz + 1e-12) & (2 * fpk <= freqs[-1] + 1e-12)
        sig_mask = sig_mask | harm
    signal = (power * sig_mask).sum(axis=-1)
    noise = (power * (mask & ~sig_mask)).sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 10.0 * np.log10(signal / noise)
    out = np.where(signal <= 0, SNR_FLOOR_DB, out)
    out = np.where((noise <= 0) & (signal > 0), SNR_CEIL_DB, out)
    return np.clip(out, SNR_FLOOR_DB, SNR_CEIL_DB)


def snr_db(spec: Spectrum, band: Band, include_harmonic: bool) -> float:
    hw = SIGNAL_HALF_WIDTH_BINS * spec.fps / spec.window_len
    return float(snr_db_array(spec.power, spec.freqs, band, include_harmonic, hw))


def to_linear(db):
    return np.power(10.0, np.asarray(db, dtype=np.float64) / 10.0)

