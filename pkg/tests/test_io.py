import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rsrvos import io


def test_rst1_header_layout():
    a = np.arange(6, dtype=np.float32).reshape(2, 3)
    blob = io.encode_rst1(a)
    assert blob[:4] == b"RST1"
    assert blob[4] == 1 and blob[5] == 2 and blob[6:8] == b"\x00\x00"
    assert struct.unpack("<2I", blob[8:16]) == (2, 3)
    assert np.frombuffer(blob[16:], "<f4").tolist() == a.ravel().tolist()


@given(arrays(np.float32, st.tuples(st.integers(1, 6), st.integers(1, 6), st.integers(1, 4)),
              elements=st.floats(-1e6, 1e6, width=32)))
def test_rst1_roundtrip_f32(a):
    b = io.decode_rst1(io.encode_rst1(a))
    assert b.dtype == np.float32 and np.array_equal(a, b)


@given(arrays(np.uint8, st.tuples(st.integers(1, 6), st.integers(1, 6))))
def test_rst1_roundtrip_u8(a):
    b = io.decode_rst1(io.encode_rst1(a))
    assert b.dtype == np.uint8 and np.array_equal(a, b)


def test_rst1_rejects_malformed():
    good = io.encode_rst1(np.zeros((2, 2), np.float32))
    with pytest.raises(io.FormatError):
        io.decode_rst1(b"XXXX" + good[4:])
    with pytest.raises(io.FormatError):
        io.decode_rst1(good[:-1])
    with pytest.raises(io.FormatError):
        io.decode_rst1(good[:4] + bytes([9]) + good[5:])
    with pytest.raises(io.FormatError):
        io.decode_rst1(good[:6] + b"\x01\x00" + good[8:])


@given(arrays(np.bool_, st.tuples(st.integers(1, 10), st.integers(1, 10))))
def test_mask_png_roundtrip(tmp_path_factory, m):
    p = tmp_path_factory.mktemp("png") / "m.png"
    io.write_mask_png(p, m)
    assert np.array_equal(io.read_mask_png(p), m)


def test_png_bytes_are_deterministic(tmp_path):
    rng = np.random.default_rng(0)
    f = rng.random((20, 30))
    io.write_frame_png(tmp_path / "a.png", f)
    io.write_frame_png(tmp_path / "b.png", f)
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()
    back = io.read_frame_png(tmp_path / "a.png")
    assert np.abs(back - f).max() <= 0.5 / 255 + 1e-12


def test_scalar_map_sources(tmp_path):
    m = np.zeros((4, 5), bool)
    m[1:3, 2:4] = True
    io.write_mask_png(tmp_path / "m.png", m)
    assert np.array_equal(io.read_scalar_map(tmp_path / "m.png"), m.astype(float))
    c = np.linspace(0, 1, 20, dtype=np.float32).reshape(4, 5)
    io.write_rst1(tmp_path / "c.rst1", c)
    assert np.allclose(io.read_scalar_map(tmp_path / "c.rst1"), c)
    io.write_rst1(tmp_path / "f.rst1", np.zeros((2, 2, 3), np.float32))
    with pytest.raises(io.FormatError):
        io.read_scalar_map(tmp_path / "f.rst1")


def test_jsonl(tmp_path):
    rows = [{"a": 1}, {"b": [1, 2]}]
    io.write_jsonl(tmp_path / "x.jsonl", rows)
    assert io.read_jsonl(tmp_path / "x.jsonl") == rows
    (tmp_path / "bad.jsonl").write_text('{"a": 1}\n{oops\n')
    with pytest.raises(io.FormatError, match=":2:"):
        io.read_jsonl(tmp_path / "bad.jsonl")
