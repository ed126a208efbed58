"""Lossless grayscale video containers.

Two formats are handled:

* ``BVR1``, a raw container: a 24 byte little-endian header followed by the
  frames, row-major, 16-bit samples stored little-endian.
* A directory of binary portable graymaps (P5), ordered by the number in the
  file name. The frame rate is not stored in PGM and must be supplied.
"""

from __future__ import annotations

import os
import re
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, TruncationError, ValidationError

MAGIC = b"BVR1"
HEADER = struct.Struct("<4sIIIBf3x")
HEADER_SIZE = HEADER.size  # 24

_DTYPES = {8: np.dtype("u1"), 16: np.dtype("<u2")}


@dataclass(frozen=True, eq=False)
class Frame:
    """A single grayscale image, ``pixels`` has shape (height, width)."""

    pixels: np.ndarray
    bit_depth: int = 8

    def __post_init__(self):
        if self.bit_depth not in _DTYPES:
            raise ValidationError(f"bit depth must be 8 or 16, got {self.bit_depth}")
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise ValidationError("frame pixels must be a 2-D grid")
        if px.size and (px.min() < 0 or px.max() >= 2**self.bit_depth):
            raise ValidationError(f"intensities outside [0, 2^{self.bit_depth})")
        object.__setattr__(self, "pixels", px.astype(_DTYPES[self.bit_depth], copy=False))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return self.bit_depth == other.bit_depth and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class VideoClip:
    """An immutable stack of frames, ``data`` has shape (n_frames, height, width).

    ``fps`` is rounded to float32 on construction so that it survives the
    container round trip unchanged.
    """

    data: np.ndarray
    fps: float
    bit_depth: int = 8
    label: str = ""
    shape: tuple = field(init=False)

    def __post_init__(self):
        if self.bit_depth not in _DTYPES:
            raise ValidationError(f"bit depth must be 8 or 16, got {self.bit_depth}")
        if not self.fps > 0 or not np.isfinite(self.fps):
            raise ValidationError(f"fps must be positive, got {self.fps}")
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ValidationError("clip data must have shape (frames, height, width)")
        if data.size and (data.min() < 0 or data.max() >= 2**self.bit_depth):
            raise ValidationError(f"intensities outside [0, 2^{self.bit_depth})")
        data = np.ascontiguousarray(data, dtype=_DTYPES[self.bit_depth])
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "fps", float(np.float32(self.fps)))
        object.__setattr__(self, "shape", data.shape)

    @classmethod
    def from_frames(cls, frames, fps, label=""):
        frames = list(frames)
        if not frames:
            raise ValidationError("use VideoClip.empty for clips without frames")
        dims = {(f.height, f.width, f.bit_depth) for f in frames}
        if len(dims) != 1:
            raise ValidationError(f"frames disagree on size or bit depth: {sorted(dims)}")
        return cls(np.stack([f.pixels for f in frames]), fps, frames[0].bit_depth, label)

    @classmethod
    def empty(cls, width, height, fps, bit_depth=8, label=""):
        return cls(np.zeros((0, height, width), _DTYPES[bit_depth]), fps, bit_depth, label)

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def duration(self) -> float:
        return len(self) / self.fps

    @property
    def frames(self) -> list[Frame]:
        return [self.frame(i) for i in range(len(self))]

    def frame(self, index: int) -> Frame:
        return Frame(self.data[index], self.bit_depth)

    def __len__(self):
        return self.data.shape[0]

    def __eq__(self, other):
        if not isinstance(other, VideoClip):
            return NotImplemented
        return (
            self.fps == other.fps
            and self.bit_depth == other.bit_depth
            and self.label == other.label
            and self.data.shape == other.data.shape
            and np.array_equal(self.data, other.data)
        )


def encode_header(clip: VideoClip) -> bytes:
    return HEADER.pack(MAGIC, clip.width, clip.height, len(clip), clip.bit_depth, clip.fps)


def write_clip(clip: VideoClip, path) -> None:
    """Write ``clip`` as a BVR1 file, atomically (temp file + rename).

    The label is not stored; it is a run-time tag.
    """
    path = Path(path)
    payload = clip.data.astype(_DTYPES[clip.bit_depth], copy=False).tobytes(order="C")
    atomic_write_bytes(path, encode_header(clip) + payload)


def read_clip(path, label: str = "") -> VideoClip:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(HEADER_SIZE)
        if len(head) < HEADER_SIZE:
            raise FormatError(f"{path}: file shorter than the {HEADER_SIZE} byte header")
        magic, width, height, count, depth, fps = HEADER.unpack(head)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if depth not in _DTYPES:
            raise FormatError(f"{path}: unsupported bit depth {depth}")
        if not fps > 0:
            raise FormatError(f"{path}: non-positive fps {fps}")
        if head[-3:] != b"\0\0\0":
            raise FormatError(f"{path}: reserved header bytes are not zero")
        dtype = _DTYPES[depth]
        frame_bytes = width * height * dtype.itemsize
        payload = fh.read()
    have = len(payload) // frame_bytes if frame_bytes else count
    if have < count:
        raise TruncationError(
            f"{path}: header declares {count} frames but frame {have} is incomplete or missing",
            frame_index=have,
        )
    if len(payload) != count * frame_bytes:
        raise FormatError(f"{path}: {len(payload) - count * frame_bytes} trailing bytes after last frame")
    data = np.frombuffer(payload, dtype=dtype).reshape(count, height, width)
    return VideoClip(data, fps, depth, label)


def slice_clip(clip: VideoClip, start_frame: int, length: int) -> VideoClip:
    if start_frame < 0 or length < 0 or start_frame + length > len(clip):
        raise IndexError(
            f"slice [{start_frame}, {start_frame + length}) outside clip of {len(clip)} frames"
        )
    return VideoClip(clip.data[start_frame : start_frame + length].copy(), clip.fps, clip.bit_depth, clip.label)


# Portable graymap sequences

_PGM_TOKEN = re.compile(rb"(?:\s+|#[^\n]*\n)*([^\s#]+)")


def read_pgm(path) -> Frame:
    buf = Path(path).read_bytes()
    pos = 0
    fields = []
    for _ in range(4):
        m = _PGM_TOKEN.match(buf, pos)
        if m is None:
            raise FormatError(f"{path}: malformed PGM header")
        fields.append(m.group(1))
        pos = m.end()
    if fields[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (magic {fields[0]!r})")
    try:
        width, height, maxval = (int(v) for v in fields[1:])
    except ValueError as exc:
        raise FormatError(f"{path}: malformed PGM header") from exc
    if not 0 < maxval < 65536:
        raise FormatError(f"{path}: maxval {maxval} out of range")
    pos += 1  # single whitespace before the raster
    depth = 8 if maxval < 256 else 16
    dtype = np.dtype("u1") if depth == 8 else np.dtype(">u2")
    need = width * height * dtype.itemsize
    raster = buf[pos : pos + need]
    if len(raster) < need:
        raise TruncationError(f"{path}: PGM raster truncated", frame_index=0)
    pixels = np.frombuffer(raster, dtype=dtype).reshape(height, width)
    return Frame(pixels, depth)


def write_pgm(frame: Frame, path) -> None:
    maxval = 2**frame.bit_depth - 1
    dtype = np.dtype("u1") if frame.bit_depth == 8 else np.dtype(">u2")
    head = f"P5\n{frame.width} {frame.height}\n{maxval}\n".encode("ascii")
    atomic_write_bytes(Path(path), head + frame.pixels.astype(dtype).tobytes())


def _frame_number(p: Path):
    digits = re.findall(r"\d+", p.stem)
    if not digits:
        raise FormatError(f"{p}: PGM file name carries no frame number")
    return int(digits[-1]), p.name


def read_pgm_sequence(directory, fps: float, label: str = "") -> VideoClip:
    """Load every ``*.pgm`` in ``directory`` in numeric order of their names."""
    files = sorted(Path(directory).glob("*.pgm"), key=_frame_number)
    if not files:
        raise FormatError(f"{directory}: no .pgm files")
    frames = []
    for i, f in enumerate(files):
        try:
            frames.append(read_pgm(f))
        except TruncationError as exc:
            raise TruncationError(str(exc), frame_index=i) from exc
    return VideoClip.from_frames(frames, fps, label)


def write_pgm_sequence(clip: VideoClip, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    digits = max(5, len(str(len(clip))))
    paths = []
    for i in range(len(clip)):
        p = directory / f"frame_{i:0{digits}d}.pgm"
        write_pgm(clip.frame(i), p)
        paths.append(p)
    return paths


def atomic_write_bytes(path: Path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(Path(path), text.encode("utf-8"))
