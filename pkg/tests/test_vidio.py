import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blurvitals.errors import FormatError, TruncationError, ValidationError
from blurvitals.vidio import (
    HEADER_SIZE,
    Frame,
    VideoClip,
    read_clip,
    read_pgm,
    read_pgm_sequence,
    slice_clip,
    write_clip,
    write_pgm,
    write_pgm_sequence,
)


def test_header_is_24_bytes():
    assert HEADER_SIZE == 24


def test_round_trip(tmp_path, small_clip):
    write_clip(small_clip, tmp_path / "a.bvr")
    back = read_clip(tmp_path / "a.bvr")
    assert back == small_clip
    assert back.fps == small_clip.fps
    np.testing.assert_array_equal(back.data, small_clip.data)


def test_round_trip_16bit(tmp_path, rng):
    clip = VideoClip(rng.integers(0, 65536, size=(3, 5, 7)).astype(np.uint16), 29.97, bit_depth=16)
    write_clip(clip, tmp_path / "b.bvr")
    assert read_clip(tmp_path / "b.bvr") == clip


def test_minimal_container(tmp_path):
    clip = VideoClip(np.array([[[0, 1], [2, 3]]], dtype=np.uint8), 10.0)
    path = tmp_path / "m.bvr"
    write_clip(clip, path)
    assert path.stat().st_size == HEADER_SIZE + 4
    frame = read_clip(path).frame(0)
    assert frame == Frame(np.array([[0, 1], [2, 3]], dtype=np.uint8), 8)
    assert frame.pixels.ravel().tolist() == [0, 1, 2, 3]


def test_deterministic_bytes(tmp_path, small_clip):
    write_clip(small_clip, tmp_path / "1.bvr")
    write_clip(small_clip, tmp_path / "2.bvr")
    assert (tmp_path / "1.bvr").read_bytes() == (tmp_path / "2.bvr").read_bytes()


def test_truncation_names_frame(tmp_path, rng):
    clip = VideoClip(rng.integers(0, 256, size=(10, 4, 4), dtype=np.uint8), 20.0)
    path = tmp_path / "t.bvr"
    write_clip(clip, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-16])
    with pytest.raises(TruncationError) as info:
        read_clip(path)
    assert info.value.frame_index == 9
    assert "frame 9" in str(info.value)
    path.write_bytes(raw[:-3])
    with pytest.raises(TruncationError) as info:
        read_clip(path)
    assert info.value.frame_index == 9


def test_bad_magic_and_trailing_bytes(tmp_path, small_clip):
    path = tmp_path / "x.bvr"
    write_clip(small_clip, path)
    raw = path.read_bytes()
    path.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError):
        read_clip(path)
    path.write_bytes(raw + b"\0")
    with pytest.raises(FormatError):
        read_clip(path)
    path.write_bytes(raw[:10])
    with pytest.raises(FormatError):
        read_clip(path)


def test_mixed_sizes_rejected_before_write(tmp_path):
    frames = [Frame(np.zeros((4, 4), np.uint8)), Frame(np.zeros((4, 5), np.uint8))]
    with pytest.raises(ValidationError):
        write_clip(VideoClip.from_frames(frames, 20.0), tmp_path / "never.bvr")
    assert not (tmp_path / "never.bvr").exists()


def test_invariants():
    with pytest.raises(ValidationError):
        VideoClip(np.zeros((1, 2, 2), np.uint8), 0.0)
    with pytest.raises(ValidationError):
        VideoClip(np.full((1, 2, 2), 300), 20.0, bit_depth=8)


def test_slice(small_clip):
    assert slice_clip(small_clip, 0, len(small_clip)) == small_clip
    empty = slice_clip(small_clip, 5, 0)
    assert len(empty) == 0 and empty.fps == small_clip.fps
    part = slice_clip(small_clip, 2, 3)
    np.testing.assert_array_equal(part.data, small_clip.data[2:5])
    with pytest.raises(IndexError):
        slice_clip(small_clip, len(small_clip) - 1, 2)


def test_pgm_round_trip(tmp_path, small_clip):
    f = small_clip.frame(0)
    write_pgm(f, tmp_path / "f.pgm")
    assert read_pgm(tmp_path / "f.pgm") == f
    write_pgm_sequence(small_clip, tmp_path / "seq")
    back = read_pgm_sequence(tmp_path / "seq", small_clip.fps)
    assert back == small_clip


def test_pgm_header_comments(tmp_path):
    (tmp_path / "c.pgm").write_bytes(b"P5\n# comment\n3 1\n# another\n255\n\x01\x02\x03")
    assert read_pgm(tmp_path / "c.pgm").pixels.ravel().tolist() == [1, 2, 3]


@settings(max_examples=25, deadline=None)
@given(
    t=st.integers(0, 4),
    h=st.integers(1, 6),
    w=st.integers(1, 6),
    depth=st.sampled_from([8, 16]),
    fps=st.floats(1.0, 240.0),
    seed=st.integers(0, 2**32 - 1),
)
def test_round_trip_property(tmp_path_factory, t, h, w, depth, fps, seed):
    rng = np.random.default_rng(seed)
    dtype = np.uint8 if depth == 8 else np.uint16
    clip = VideoClip(rng.integers(0, 2**depth, size=(t, h, w)).astype(dtype), fps, bit_depth=depth)
    path = tmp_path_factory.mktemp("rt") / "c.bvr"
    write_clip(clip, path)
    assert read_clip(path) == clip
    assert path.stat().st_size == HEADER_SIZE + t * h * w * (depth // 8)
