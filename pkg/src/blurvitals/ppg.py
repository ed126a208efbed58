"""Single-channel PPG traces: block means over time, AC/DC normalised per window."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import detrend

from .errors import ValidationError
from .grid import Block, block_mean, grid_means
from .spectra import WindowPlan, frame_windows
from .vidio import VideoClip

MIN_DC = 1.0


@dataclass(frozen=True, eq=False)
class PpgTrace:
    """``c_raw`` has one sample per frame.

    ``c_norm`` has shape (n_windows, window_len); without a window plan the
    whole clip is one window and ``c_norm`` is a flat per-frame array.
    ``usable`` is false for windows whose mean intensity is below MIN_DC.
    """

    block_id: int
    c_raw: np.ndarray
    c_norm: np.ndarray
    usable: np.ndarray


def normalize_windows(segments: np.ndarray, min_dc: float = MIN_DC):
    """(x - mean) / mean followed by a linear detrend, along the last axis.

    Returns ``(normalised, usable)``; unusable windows come back as zeros.
    """
    segments = np.asarray(segments, dtype=np.float64)
    dc = segments.mean(axis=-1, keepdims=True)
    usable = dc[..., 0] >= min_dc
    safe = np.where(usable[..., None], dc, 1.0)
    out = detrend((segments - dc) / safe, axis=-1, type="linear")
    out = np.where(usable[..., None], out, 0.0)
    # detrend leaves ~1e-17 offsets; pin the mean exactly
    out = out - out.mean(axis=-1, keepdims=True)
    return out, usable


def extract_trace(clip, block: Block, plan: WindowPlan | None = None, block_id: int = 0) -> PpgTrace:
    data = clip.data if isinstance(clip, VideoClip) else np.asarray(clip)
    if data.shape[0] == 0:
        raise ValidationError("empty clip")
    c_raw = np.array([block_mean(frame, block) for frame in data])
    if plan is None:
        c_norm, usable = normalize_windows(c_raw)
        usable = np.atleast_1d(usable)
    else:
        c_norm, usable = normalize_windows(frame_windows(c_raw, plan))
    return PpgTrace(block_id, c_raw, c_norm, usable)


def grid_traces(frames: np.ndarray, grid) -> np.ndarray:
    """c_raw for every block, shape (n_blocks, T)."""
    return grid_means(frames, grid).T
