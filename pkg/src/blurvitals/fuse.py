"""SNR heatmaps, RoI selection, local-to-global fusion and motion gating."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ValidationError
from .spectra import (
    SIGNAL_HALF_WIDTH_BINS,
    SNR_FLOOR_DB,
    Band,
    WindowPlan,
    band_peak_index,
    power_spectra,
    snr_db_array,
    to_linear,
)

PPG_HR = "ppg_hr"
MOTION_RR = "motion_rr"
AXES = ("dx", "dy")


@dataclass(frozen=True)
class GatingConfig:
    threshold: float = 1.0

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValidationError(f"gate threshold must be positive, got {self.threshold}")


@dataclass(frozen=True)
class FuseConfig:
    hr_band: Band = Band(0.70, 3.00)
    rr_band: Band = Band(0.10, 0.70)
    roi_k: int = 10
    min_snr_db: float = 0.0
    gating: GatingConfig = field(default_factory=GatingConfig)
    rr_source: str = "axis"  # or "theta"

    def __post_init__(self):
        if self.roi_k < 1:
            raise ValidationError(f"roi_k must be >= 1, got {self.roi_k}")
        if self.rr_source not in ("axis", "theta"):
            raise ValidationError(f"rr_source must be 'axis' or 'theta', got {self.rr_source!r}")


@dataclass(frozen=True, eq=False)
class SnrHeatmap:
    """Per-block SNR (dB) for one window. ``axis`` is set for motion maps:
    0 where dx won, 1 where dy won."""

    window_index: int
    snr: np.ndarray
    modality: str
    axis: np.ndarray | None = None


@dataclass
class VitalEstimate:
    window_index: int
    t_center_s: float
    hr_bpm: float | None
    rr_bpm: float | None
    hr_quality: float
    rr_quality: float
    gated: bool
    motion_intensity: float
    hr_roi: tuple = ()
    rr_roi: tuple = ()

    def record(self) -> dict:
        """Row for the newline-delimited estimates file. Absent rates are omitted."""
        rec = {"window_index": self.window_index, "t_center_s": round(self.t_center_s, 6)}
        if self.hr_bpm is not None:
            rec["hr_bpm"] = round(self.hr_bpm, 6)
        if self.rr_bpm is not None:
            rec["rr_bpm"] = round(self.rr_bpm, 6)
        rec["hr_quality_db"] = round(self.hr_quality, 6)
        rec["rr_quality_db"] = round(self.rr_quality, 6)
        rec["gated"] = self.gated
        rec["motion_intensity"] = round(self.motion_intensity, 6)
        return rec


@dataclass(frozen=True, eq=False)
class WindowState:
    """Everything one analysis window needs, for every block.

    ppg: (n_blocks, L) normalised PPG segments; ppg_usable: (n_blocks,);
    pos_x, pos_y: (n_blocks, L) block displacement (cumulative inter-frame
    motion, linearly detrended); theta: (n_blocks, L) per-pair
    atan2(dy, dx); body_x, body_y: (L,) whole-frame position, linearly
    detrended, used for gating.
    """

    window_index: int
    t_center_s: float
    fps: float
    plan: WindowPlan
    ppg: np.ndarray
    ppg_usable: np.ndarray
    pos_x: np.ndarray
    pos_y: np.ndarray
    theta: np.ndarray
    body_x: np.ndarray
    body_y: np.ndarray


def _half_width(plan: WindowPlan, fps: float) -> float:
    return SIGNAL_HALF_WIDTH_BINS * plan.resolution_hz(fps)


def build_heatmap(per_block_power, freqs, band: Band, modality: str, plan: WindowPlan, fps: float,
                  window_index: int = 0, usable=None) -> SnrHeatmap:
    """Per-block SNR for one window.

    For ``ppg_hr`` ``per_block_power`` is (n_blocks, F) and the first
    harmonic counts as signal. For ``motion_rr`` it is (2, n_blocks, F)
    holding the dx and dy spectra; each block keeps its better axis.
    """
    power = np.asarray(per_block_power, dtype=np.float64)
    hw = _half_width(plan, fps)
    if modality == PPG_HR:
        if power.ndim != 2 or not np.all(np.isfinite(power)):
            raise DataError("incomplete input: PPG heatmap needs one finite spectrum per block")
        snr = snr_db_array(power, freqs, band, True, hw)
        if usable is not None:
            snr = np.where(usable, snr, SNR_FLOOR_DB)
        return SnrHeatmap(window_index, snr, modality)
    if modality == MOTION_RR:
        if power.ndim != 3 or power.shape[0] != 2 or not np.all(np.isfinite(power)):
            raise DataError("incomplete input: motion heatmap needs dx and dy spectra for every block")
        both = snr_db_array(power, freqs, band, False, hw)
        axis = np.argmax(both, axis=0)
        return SnrHeatmap(window_index, both.max(axis=0), modality, axis)
    raise ValidationError(f"unknown modality {modality!r}")


def select_roi(heatmap: SnrHeatmap, k: int = 10, min_snr: float = 0.0) -> tuple[int, ...]:
    """Up to ``k`` highest-SNR block ids with SNR >= ``min_snr``.

    Ties break toward the lower block index. May be empty.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    snr = np.asarray(heatmap.snr)
    order = np.lexsort((np.arange(snr.size), -snr))
    picked = [int(i) for i in order[:k] if snr[i] >= min_snr]
    return tuple(picked)


def combine_global(traces, weights_db, align_sign: bool = False):
    """SNR-weighted average of the selected traces, re-centred to zero mean.

    Weights are the linear SNR 10**(dB/10). With ``align_sign`` each trace is
    flipped to correlate positively with the highest-weighted one first,
    which keeps anti-phase motion components from cancelling. Returns None
    for an empty selection.
    """
    traces = np.asarray(traces, dtype=np.float64)
    if traces.size == 0 or traces.shape[0] == 0:
        return None
    if traces.ndim == 1:
        traces = traces[None]
    w = to_linear(weights_db)
    if w.shape != (traces.shape[0],) or not np.all(w > 0):
        raise ValidationError("need one positive weight per trace")
    if align_sign and traces.shape[0] > 1:
        ref = traces[np.argmax(w)]
        signs = np.where(traces @ ref < 0, -1.0, 1.0)
        traces = traces * signs[:, None]
    g = (w[:, None] * traces).sum(axis=0) / w.sum()
    return g - g.mean()


def motion_metric(x, y=None) -> float:
    """Temporal standard deviation of a (possibly 2-D) motion signal.

    With both components this is sqrt(var(x) + var(y)), the RMS distance of
    the trajectory from its mean position; with one it is the plain
    population standard deviation.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValidationError("motion window is empty")
    v = x.var()
    if y is not None:
        v += np.asarray(y, dtype=np.float64).var()
    return float(np.sqrt(v))


def _global_rate(traces, snr, roi, band, plan, fps, include_harmonic, align_sign):
    if not roi:
        return None, SNR_FLOOR_DB
    g = combine_global(traces[list(roi)], snr[list(roi)], align_sign)
    power = power_spectra(g, plan)
    freqs = plan.freqs(fps)
    f = float(freqs[band_peak_index(power, freqs, band)])
    q = float(snr_db_array(power, freqs, band, include_harmonic, _half_width(plan, fps)))
    return f * 60.0, q


def window_heatmaps(state: WindowState, cfg: FuseConfig):
    plan, fps = state.plan, state.fps
    freqs = plan.freqs(fps)
    ppg_map = build_heatmap(power_spectra(state.ppg, plan), freqs, cfg.hr_band, PPG_HR, plan, fps,
                            state.window_index, state.ppg_usable)
    if cfg.rr_source == "theta":
        p = power_spectra(state.theta, plan)
        motion = np.stack([p, p])
    else:
        motion = np.stack([power_spectra(state.pos_x, plan), power_spectra(state.pos_y, plan)])
    rr_map = build_heatmap(motion, freqs, cfg.rr_band, MOTION_RR, plan, fps, state.window_index)
    return ppg_map, rr_map


def estimate_window(state: WindowState, cfg: FuseConfig) -> VitalEstimate:
    """HR and RR for one analysis window, or a gated record."""
    plan, fps = state.plan, state.fps
    intensity = motion_metric(state.body_x, state.body_y)
    ppg_map, rr_map = window_heatmaps(state, cfg)

    hr_roi = select_roi(ppg_map, cfg.roi_k, cfg.min_snr_db)
    hr, hr_q = _global_rate(state.ppg, ppg_map.snr, hr_roi, cfg.hr_band, plan, fps, True, False)

    if cfg.rr_source == "theta":
        axis_traces = state.theta
    else:
        axis_traces = np.where(rr_map.axis[:, None] == 0, state.pos_x, state.pos_y)
    rr_roi = select_roi(rr_map, cfg.roi_k, cfg.min_snr_db)
    rr, rr_q = _global_rate(axis_traces, rr_map.snr, rr_roi, cfg.rr_band, plan, fps, False, True)

    gated = intensity > cfg.gating.threshold
    if gated:
        hr = rr = None
    return VitalEstimate(state.window_index, state.t_center_s, hr, rr, hr_q, rr_q, bool(gated),
                         intensity, hr_roi, rr_roi)
