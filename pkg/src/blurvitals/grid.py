"""Multi-scale block segmentation of the frame."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

DEFAULT_SCALES = (16, 32, 64)
MIN_SCALE = 4


@dataclass(frozen=True)
class Block:
    x0: int
    y0: int
    size: int
    scale_index: int

    @property
    def x1(self) -> int:
        return self.x0 + self.size

    @property
    def y1(self) -> int:
        return self.y0 + self.size

    def region(self):
        return np.s_[self.y0 : self.y1, self.x0 : self.x1]


@dataclass(frozen=True)
class BlockGrid:
    """Blocks ordered scale-major, then row-major within a scale."""

    blocks: tuple[Block, ...]
    width: int
    height: int
    scales: tuple[int, ...]
    skipped: tuple[int, ...] = field(default=())

    def __len__(self):
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    def __getitem__(self, i):
        return self.blocks[i]

    @property
    def frame_dims(self):
        return self.width, self.height

    def scale_slices(self):
        """Yield ``(size, slice)`` with the index range each scale occupies."""
        start = 0
        for s in self.scales:
            n = (self.width // s) * (self.height // s)
            yield s, slice(start, start + n)
            start += n

    def coverage(self, mask: np.ndarray) -> np.ndarray:
        """Fraction of each block's pixels where ``mask`` is true."""
        out = np.empty(len(self.blocks))
        for i, b in enumerate(self.blocks):
            out[i] = mask[b.region()].mean()
        return out


def parse_scales(text: str) -> tuple[int, ...]:
    try:
        scales = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ValidationError(f"scales must be comma-separated integers, got {text!r}") from exc
    if not scales:
        raise ValidationError("scale list is empty")
    return scales


def build_grid(width: int, height: int, scales=DEFAULT_SCALES) -> BlockGrid:
    """Tile the frame with non-overlapping square blocks at each scale.

    Trailing partial blocks are dropped. Scales that do not fit the frame are
    skipped and listed in ``BlockGrid.skipped``.
    """
    scales = tuple(int(s) for s in scales)
    if not scales:
        raise ValidationError("scale list is empty")
    for s in scales:
        if s < MIN_SCALE:
            raise ValidationError(f"block size {s} below the {MIN_SCALE} px minimum")
    kept = tuple(s for s in scales if s <= min(width, height))
    skipped = tuple(s for s in scales if s not in kept)
    if not kept:
        raise ValidationError(f"no scale in {list(scales)} fits a {width}x{height} frame")
    blocks = []
    for si, s in enumerate(kept):
        for row in range(height // s):
            for col in range(width // s):
                blocks.append(Block(col * s, row * s, s, si))
    return BlockGrid(tuple(blocks), width, height, kept, skipped)


def block_mean(pixels: np.ndarray, block: Block) -> float:
    """Arithmetic mean of the block's pixels, unquantized."""
    pixels = getattr(pixels, "pixels", pixels)
    if block.x1 > pixels.shape[1] or block.y1 > pixels.shape[0] or block.x0 < 0 or block.y0 < 0:
        raise IndexError(f"{block} outside {pixels.shape[1]}x{pixels.shape[0]} frame")
    return float(pixels[block.region()].astype(np.float64).mean())


def grid_means(frames: np.ndarray, grid: BlockGrid) -> np.ndarray:
    """Block means for a whole stack, shape (T, n_blocks), in grid order.

    ``frames`` may be (H, W) or (T, H, W). Uses reshape-and-reduce per scale,
    which matches the block order of ``build_grid``.
    """
    frames = np.asarray(frames)
    single = frames.ndim == 2
    if single:
        frames = frames[None]
    out = np.empty((frames.shape[0], len(grid)))
    for s, sl in grid.scale_slices():
        ny, nx = grid.height // s, grid.width // s
        sub = frames[:, : ny * s, : nx * s].astype(np.float64)
        sums = sub.reshape(frames.shape[0], ny, s, nx, s).sum(axis=(2, 4))
        out[:, sl] = sums.reshape(frames.shape[0], ny * nx) / (s * s)
    return out[0] if single else out
