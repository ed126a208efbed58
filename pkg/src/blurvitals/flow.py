"""Per-block rigid translation between consecutive frames.

Each block gets one Lucas-Kanade least-squares solve of

    [sum IxIx  sum IxIy] [dx]      [sum IxIt]
    [sum IxIy  sum IyIy] [dy] = -  [sum IyIt]

with central-difference gradients of the previous frame and It = curr - prev,
followed by a single refinement: curr is resampled (bilinear) at the
estimated offset and the residual shift is solved with the same matrix.
Positive dx means content moved right, positive dy means it moved down.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .grid import Block, BlockGrid
from .vidio import VideoClip

MAX_DISPLACEMENT = 8.0
MAX_CONDITION = 1e6
LOW_TEXTURE = 1
CAPPED = 2

_BATCH = 64


@dataclass(frozen=True, eq=False)
class MotionTrace:
    """dx, dy, theta and flags have length frames - 1 (one per frame pair)."""

    block_id: int
    dx: np.ndarray
    dy: np.ndarray
    theta: np.ndarray
    flags: np.ndarray

    @property
    def low_texture(self) -> np.ndarray:
        return (self.flags & LOW_TEXTURE).astype(bool)

    @property
    def capped(self) -> np.ndarray:
        return (self.flags & CAPPED).astype(bool)


def combined_angle(dx, dy):
    """atan2(dy, dx), defined as 0 where both components are zero."""
    dx = np.asarray(dx, dtype=float)
    dy = np.asarray(dy, dtype=float)
    return np.where((dx == 0) & (dy == 0), 0.0, np.arctan2(dy, dx))


def gradients(frames: np.ndarray):
    """Central-difference x and y gradients over the last two axes."""
    frames = np.asarray(frames, dtype=np.float64)
    gy, gx = np.gradient(frames, axis=(-2, -1))
    return gx, gy


def bilinear_sample(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sample ``img`` (H, W) or (T, H, W) at float coordinates with edge clamping.

    For stacked input ``x`` and ``y`` must broadcast against (T, H', W').
    """
    h, w = img.shape[-2:]
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(x).astype(np.intp), w - 2 if w > 1 else 0)
    y0 = np.minimum(np.floor(y).astype(np.intp), h - 2 if h > 1 else 0)
    fx = x - x0
    fy = y - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    if img.ndim == 2:
        a, b, c, d = img[y0, x0], img[y0, x1], img[y1, x0], img[y1, x1]
    else:
        t = np.arange(img.shape[0]).reshape(-1, 1, 1)
        a, b, c, d = img[t, y0, x0], img[t, y0, x1], img[t, y1, x0], img[t, y1, x1]
    return (a * (1 - fx) + b * fx) * (1 - fy) + (c * (1 - fx) + d * fx) * fy


def shift_image(img: np.ndarray, dx: float, dy: float) -> np.ndarray:
    """Translate content by (dx, dy) pixels with bilinear resampling."""
    h, w = img.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return bilinear_sample(np.asarray(img, dtype=np.float64), xx - dx, yy - dy)


def _solve(sxx, sxy, syy, bx, by):
    """Solve the 2x2 systems; returns dx, dy and a degenerate mask."""
    tr = 0.5 * (sxx + syy)
    disc = np.sqrt(0.25 * (sxx - syy) ** 2 + sxy**2)
    lmax, lmin = tr + disc, tr - disc
    with np.errstate(divide="ignore", invalid="ignore"):
        degenerate = ~(lmin > 0) | (lmax > MAX_CONDITION * lmin)
        det = sxx * syy - sxy * sxy
        dx = (syy * bx - sxy * by) / det
        dy = (sxx * by - sxy * bx) / det
    dx = np.where(degenerate, 0.0, dx)
    dy = np.where(degenerate, 0.0, dy)
    return dx, dy, degenerate


def _finish(dx, dy, degenerate, cap):
    capped = (np.abs(dx) > cap) | (np.abs(dy) > cap)
    flags = degenerate.astype(np.uint8) * LOW_TEXTURE | capped.astype(np.uint8) * CAPPED
    return np.clip(dx, -cap, cap), np.clip(dy, -cap, cap), flags


def estimate_block_flow(prev, curr, block: Block, max_displacement=MAX_DISPLACEMENT):
    """Translation of ``block`` from ``prev`` to ``curr``.

    Returns ``(dx, dy, flags)``; flags carry LOW_TEXTURE when the normal
    matrix is degenerate (the shift is then (0, 0)) and CAPPED when a
    component was clipped to ``max_displacement``.
    """
    prev = np.asarray(getattr(prev, "pixels", prev), dtype=np.float64)
    curr = np.asarray(getattr(curr, "pixels", curr), dtype=np.float64)
    if prev.shape != curr.shape:
        raise ValidationError(f"frame shapes differ: {prev.shape} vs {curr.shape}")
    if block.x0 < 0 or block.y0 < 0 or block.x1 > prev.shape[1] or block.y1 > prev.shape[0]:
        raise IndexError(f"{block} outside frame")
    gx, gy = gradients(prev)
    reg = block.region()
    ix, iy = gx[reg], gy[reg]
    it = curr[reg] - prev[reg]
    sxx, sxy, syy = (ix * ix).sum(), (ix * iy).sum(), (iy * iy).sum()
    dx, dy, deg = _solve(sxx, sxy, syy, -(ix * it).sum(), -(iy * it).sum())
    if not deg:
        yy, xx = np.mgrid[block.y0 : block.y1, block.x0 : block.x1].astype(np.float64)
        cap = float(max_displacement)
        warped = bilinear_sample(curr, xx + np.clip(dx, -cap, cap), yy + np.clip(dy, -cap, cap))
        it = warped - prev[reg]
        ddx, ddy, _ = _solve(sxx, sxy, syy, -(ix * it).sum(), -(iy * it).sum())
        dx, dy = dx + ddx, dy + ddy
    dx, dy, flags = _finish(np.float64(dx), np.float64(dy), np.bool_(deg), max_displacement)
    return float(dx), float(dy), int(flags)


def _tile_sum(a, s, ny, nx):
    t = a.shape[0]
    return a[:, : ny * s, : nx * s].reshape(t, ny, s, nx, s).sum(axis=(2, 4)).reshape(t, ny * nx)


def _warp_tiles(padded, margin, s, fx, fy):
    """Bilinear resample of each s x s tile at its own (fx, fy) offset.

    ``padded`` is the (T, H, W) stack edge-padded by ``margin``, which must
    exceed the largest offset; edge padding reproduces coordinate clamping.
    fx, fy have shape (T, ny, nx).
    """
    t, hp, wp = padded.shape
    ny, nx = fx.shape[1:]
    ix = np.floor(fx)
    iy = np.floor(fy)
    ax = (fx - ix)[:, :, None, :, None]
    ay = (fy - iy)[:, :, None, :, None]
    base = (np.arange(t) * hp * wp)[:, None, None] + (iy.astype(np.intp) + margin) * wp + ix.astype(np.intp) + margin
    rows = (np.arange(ny) * s)[:, None, None, None] + np.arange(s)[None, :, None, None]
    cols = (np.arange(nx) * s)[None, None, :, None] + np.arange(s)[None, None, None, :]
    local = rows * wp + cols  # (ny, s, nx, s)
    idx = base[:, :, None, :, None] + local[None]
    flat = padded.ravel()
    a = flat.take(idx)
    b = flat.take(idx + 1)
    c = flat.take(idx + wp)
    d = flat.take(idx + wp + 1)
    out = (a + (b - a) * ax) * (1 - ay) + (c + (d - c) * ax) * ay
    return out.reshape(t, ny * s, nx * s)


def grid_flow(frames: np.ndarray, grid: BlockGrid, max_displacement=MAX_DISPLACEMENT):
    """Flow for every block and consecutive frame pair of a stack.

    Returns ``dx, dy, flags`` of shape (T - 1, n_blocks). Equivalent to
    calling :func:`estimate_block_flow` per block and pair, but batched.
    """
    frames = np.asarray(frames)
    n = frames.shape[0] - 1
    if n < 1:
        raise ValidationError("flow needs at least two frames")
    nb = len(grid)
    dx_out = np.zeros((n, nb))
    dy_out = np.zeros((n, nb))
    fl_out = np.zeros((n, nb), np.uint8)
    cap = float(max_displacement)
    margin = int(np.ceil(cap)) + 2
    for start in range(0, n, _BATCH):
        stop = min(start + _BATCH, n)
        chunk = frames[start : stop + 1].astype(np.float64)
        prev, curr = chunk[:-1], chunk[1:]
        gx, gy = gradients(prev)
        it0 = curr - prev
        pxx, pxy, pyy = gx * gx, gx * gy, gy * gy
        padded = np.pad(curr, ((0, 0), (margin, margin), (margin, margin)), mode="edge")
        for s, sl in grid.scale_slices():
            ny, nx = grid.height // s, grid.width // s
            sxx, sxy, syy = (_tile_sum(p, s, ny, nx) for p in (pxx, pxy, pyy))
            bx = -_tile_sum(gx * it0, s, ny, nx)
            by = -_tile_sum(gy * it0, s, ny, nx)
            dx, dy, deg = _solve(sxx, sxy, syy, bx, by)
            # refinement: resample curr at block offsets
            t = stop - start
            fx = np.clip(dx, -cap, cap).reshape(t, ny, nx)
            fy = np.clip(dy, -cap, cap).reshape(t, ny, nx)
            warped = _warp_tiles(padded, margin, s, fx, fy)
            it1 = warped - prev[:, : ny * s, : nx * s]
            gxs, gys = gx[:, : ny * s, : nx * s], gy[:, : ny * s, : nx * s]
            ddx, ddy, _ = _solve(
                sxx, sxy, syy, -_tile_sum(gxs * it1, s, ny, nx), -_tile_sum(gys * it1, s, ny, nx)
            )
            dx = np.where(deg, 0.0, dx + ddx)
            dy = np.where(deg, 0.0, dy + ddy)
            dx, dy, fl = _finish(dx, dy, deg, max_displacement)
            dx_out[start:stop, sl] = dx
            dy_out[start:stop, sl] = dy
            fl_out[start:stop, sl] = fl
    return dx_out, dy_out, fl_out


def trace_block(clip, block: Block, block_id: int = 0, max_displacement=MAX_DISPLACEMENT) -> MotionTrace:
    data = clip.data if isinstance(clip, VideoClip) else np.asarray(clip)
    if data.shape[0] < 2:
        raise ValidationError("a motion trace needs at least two frames")
    n = data.shape[0] - 1
    dx, dy, fl = np.zeros(n), np.zeros(n), np.zeros(n, np.uint8)
    for t in range(n):
        dx[t], dy[t], fl[t] = estimate_block_flow(data[t], data[t + 1], block, max_displacement)
    return MotionTrace(block_id, dx, dy, combined_angle(dx, dy), fl)
