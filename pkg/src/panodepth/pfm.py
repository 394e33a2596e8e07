"""Portable float map reader/writer.

Canonical interchange format for disparity and depth rasters: single-channel
``Pf`` (or 3-channel ``PF``), little-endian (scale -1.0), scanlines stored
bottom-to-top.  Invalid pixels are encoded as NaN.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ParameterError


def write_pfm(path, data: np.ndarray, scale: float = -1.0) -> None:
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 2:
        ident = b"Pf"
    elif data.ndim == 3 and data.shape[2] == 3:
        ident = b"PF"
    else:
        raise ParameterError(f"PFM supports (H, W) or (H, W, 3) data, got {data.shape}")
    if scale == 0:
        raise ParameterError("PFM scale must be non-zero")
    h, w = data.shape[:2]
    flipped = np.flipud(data)
    if scale < 0:
        payload = flipped.astype("<f4").tobytes()
    else:
        payload = flipped.astype(">f4").tobytes()
    with open(path, "wb") as f:
        f.write(ident + b"\n")
        f.write(f"{w} {h}\n".encode())
        f.write(f"{scale:.1f}\n".encode())
        f.write(payload)


def _read_token(f) -> bytes:
    tok = b""
    while True:
        c = f.read(1)
        if not c:
            raise ParameterError("truncated PFM header")
        if c.isspace():
            if tok:
                return tok
            continue
        tok += c


def read_pfm(path) -> np.ndarray:
    """Read a PFM file into float32, rows top-to-bottom."""
    with open(path, "rb") as f:
        ident = _read_token(f)
        if ident == b"Pf":
            channels = 1
        elif ident == b"PF":
            channels = 3
        else:
            raise ParameterError(f"not a PFM file: identifier {ident!r}")
        w = int(_read_token(f))
        h = int(_read_token(f))
        scale = float(_read_token(f))
        if scale == 0:
            raise ParameterError("PFM scale must be non-zero")
        dtype = "<f4" if scale < 0 else ">f4"
        raw = f.read(w * h * channels * 4)
        if len(raw) != w * h * channels * 4:
            raise ParameterError("truncated PFM payload")
    data = np.frombuffer(raw, dtype=dtype)
    shape = (h, w) if channels == 1 else (h, w, 3)
    return np.flipud(data.reshape(shape)).astype(np.float32)


def read_float_map(path) -> np.ndarray:
    """Read a float raster: PFM natively, single-channel EXR if a codec exists."""
    p = Path(path)
    if p.suffix.lower() == ".pfm":
        return read_pfm(p)
    if p.suffix.lower() == ".exr":
        try:
            import imageio.v3 as iio

            data = np.asarray(iio.imread(p))
        except Exception as exc:
            raise ParameterError(
                f"cannot read {p}: EXR support needs an imageio EXR plugin ({exc}); "
                "convert to PFM instead"
            ) from exc
        if data.ndim == 3:
            data = data[..., 0]
        return data.astype(np.float32)
    raise ParameterError(f"unsupported float-map format: {p.suffix!r}")
