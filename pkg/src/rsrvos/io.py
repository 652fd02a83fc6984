"""File formats: RST1 tensors, 8-bit PNG masks/frames, JSON lines."""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

MAGIC = b"RST1"
DTYPE_F32 = 1
DTYPE_U8 = 2
_DTYPES = {DTYPE_F32: np.dtype("<f4"), DTYPE_U8: np.dtype("u1")}
PNG_COMPRESS_LEVEL = 6


class FormatError(ValueError):
    """Raised for malformed input files."""


def encode_rst1(array) -> bytes:
    a = np.asarray(array)
    if a.dtype == np.uint8:
        code = DTYPE_U8
    else:
        code = DTYPE_F32
        a = a.astype("<f4")
    if a.ndim not in (2, 3):
        raise ValueError(f"RST1 holds 2-D or 3-D tensors, got ndim={a.ndim}")
    header = MAGIC + struct.pack("<BBH", code, a.ndim, 0)
    header += struct.pack(f"<{a.ndim}I", *a.shape)
    return header + np.ascontiguousarray(a).tobytes()


def decode_rst1(blob: bytes) -> np.ndarray:
    if len(blob) < 8 or blob[:4] != MAGIC:
        raise FormatError("not an RST1 tensor (bad magic)")
    code, ndim, reserved = struct.unpack_from("<BBH", blob, 4)
    if code not in _DTYPES:
        raise FormatError(f"unknown RST1 dtype code {code}")
    if reserved != 0:
        raise FormatError("RST1 reserved bytes must be zero")
    if ndim not in (2, 3):
        raise FormatError(f"unsupported RST1 ndim {ndim}")
    dims = struct.unpack_from(f"<{ndim}I", blob, 8)
    offset = 8 + 4 * ndim
    dtype = _DTYPES[code]
    expected = int(np.prod(dims)) * dtype.itemsize
    if len(blob) - offset != expected:
        raise FormatError(f"RST1 payload is {len(blob) - offset} bytes, expected {expected}")
    return np.frombuffer(blob, dtype=dtype, offset=offset).reshape(dims).copy()


def write_rst1(path, array) -> None:
    Path(path).write_bytes(encode_rst1(array))


def read_rst1(path) -> np.ndarray:
    return decode_rst1(Path(path).read_bytes())


def _save_png(path, arr: np.ndarray) -> None:
    Image.fromarray(arr).save(path, format="PNG", optimize=False, compress_level=PNG_COMPRESS_LEVEL)


def write_mask_png(path, mask) -> None:
    _save_png(path, np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8))


def read_mask_png(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.ndim == 3:
        arr = arr[..., 0]
    return arr != 0


def write_frame_png(path, frame) -> None:
    f = np.clip(np.asarray(frame, dtype=np.float64), 0.0, 1.0)
    _save_png(path, np.round(f * 255.0).astype(np.uint8))


def read_frame_png(path) -> np.ndarray:
    """Grayscale frame as float64 in [0, 1]."""
    with Image.open(path) as im:
        im = im.convert("L")
        arr = np.asarray(im, dtype=np.float64)
    return arr / 255.0


def write_rgb_png(path, rgb) -> None:
    _save_png(path, np.asarray(rgb, dtype=np.uint8))


def read_scalar_map(path) -> np.ndarray:
    """Confidence/scalar map from RST1, or from a PNG mask read as {0, 1}."""
    p = Path(path)
    if p.suffix.lower() == ".png":
        return read_mask_png(p).astype(np.float64)
    arr = read_rst1(p)
    if arr.ndim != 2:
        raise FormatError(f"{p}: expected a 2-D scalar map, got shape {arr.shape}")
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    return arr.astype(np.float64)


def read_jsonl(path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return rows


def write_jsonl(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def list_pngs(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"not a directory: {d}")
    return sorted(p for p in d.iterdir() if p.suffix.lower() == ".png")
