"""End-to-end processing of one clip into per-window vital estimates."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.signal import detrend

from . import flow
from .errors import InsufficientDataError
from .fuse import FuseConfig, VitalEstimate, WindowState, estimate_window, window_heatmaps
from .grid import DEFAULT_SCALES, BlockGrid, build_grid, grid_means
from .ppg import normalize_windows
from .spectra import WindowPlan

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    scales: tuple = DEFAULT_SCALES
    window_sec: float = 10.0
    hop_sec: float = 1.0
    max_displacement: float = flow.MAX_DISPLACEMENT
    fuse: FuseConfig = field(default_factory=FuseConfig)

    def plan(self, fps: float) -> WindowPlan:
        return WindowPlan.from_seconds(self.window_sec, self.hop_sec, fps)


@dataclass(eq=False)
class ClipAnalysis:
    """Per-block signals for a whole clip; windows are cut from these on demand."""

    grid: BlockGrid
    plan: WindowPlan
    fps: float
    c_raw: np.ndarray  # (n_blocks, T)
    dx: np.ndarray  # (n_blocks, T), sample t is the motion from frame t-1 to t; dx[:, 0] = 0
    dy: np.ndarray
    flags: np.ndarray
    body_x: np.ndarray  # (T,) whole-frame position, cumulative mean motion (drifts; detrended per window)
    body_y: np.ndarray

    @cached_property
    def pos_x(self) -> np.ndarray:
        """Per-block displacement relative to the first frame."""
        return np.cumsum(self.dx, axis=1)

    @cached_property
    def pos_y(self) -> np.ndarray:
        return np.cumsum(self.dy, axis=1)

    @property
    def n_windows(self) -> int:
        return self.plan.count(self.c_raw.shape[1])

    def window(self, w: int) -> WindowState:
        L = self.plan.window_len
        s = w * self.plan.hop
        seg = slice(s, s + L)
        ppg, usable = normalize_windows(self.c_raw[:, seg])
        dx, dy = self.dx[:, seg], self.dy[:, seg]
        return WindowState(
            window_index=w,
            t_center_s=(s + L / 2) / self.fps,
            fps=self.fps,
            plan=self.plan,
            ppg=ppg,
            ppg_usable=usable,
            pos_x=detrend(self.pos_x[:, seg], axis=-1, type="linear"),
            pos_y=detrend(self.pos_y[:, seg], axis=-1, type="linear"),
            theta=flow.combined_angle(dx, dy),
            body_x=detrend(self.body_x[seg], type="linear"),
            body_y=detrend(self.body_y[seg], type="linear"),
        )


def analyze_clip(clip, cfg: PipelineConfig = PipelineConfig()) -> ClipAnalysis:
    plan = cfg.plan(clip.fps)
    n = len(clip)
    if n < plan.window_len:
        raise InsufficientDataError(
            f"clip has {n} frames, at least {plan.window_len} ({cfg.window_sec:g} s) are required",
            required=plan.window_len,
        )
    grid = build_grid(clip.width, clip.height, cfg.scales)
    for s in grid.skipped:
        log.warning("block size %d does not fit a %dx%d frame, skipped", s, clip.width, clip.height)
    c_raw = grid_means(clip.data, grid).T
    dx, dy, fl = flow.grid_flow(clip.data, grid, cfg.max_displacement)
    pad = np.zeros((1, len(grid)))
    dx = np.concatenate([pad, dx]).T
    dy = np.concatenate([pad, dy]).T
    fl = np.concatenate([pad.astype(np.uint8), fl]).T
    finest = min(grid.scales)
    sl = dict(grid.scale_slices())[finest]
    body_x = np.cumsum(dx[sl].mean(axis=0))
    body_y = np.cumsum(dy[sl].mean(axis=0))
    return ClipAnalysis(grid, plan, clip.fps, c_raw, dx, dy, fl, body_x, body_y)


def process_clip(clip, cfg: PipelineConfig = PipelineConfig()) -> list[VitalEstimate]:
    analysis = analyze_clip(clip, cfg)
    return [estimate_window(analysis.window(w), cfg.fuse) for w in range(analysis.n_windows)]


def heatmaps(analysis: ClipAnalysis, cfg: PipelineConfig, w: int):
    return window_heatmaps(analysis.window(w), cfg.fuse)


def estimates_to_ndjson(estimates) -> str:
    return "".join(json.dumps(e.record(), sort_keys=False) + "\n" for e in estimates)


def read_estimates(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]

