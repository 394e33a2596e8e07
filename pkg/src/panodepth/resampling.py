"""Masked resampling between the ERP grid and tangent images.

Bilinear samples renormalise their weights over valid corners; a sample whose
four corners are all invalid is masked.  ERP sampling wraps around the
longitude seam; tangent sampling never wraps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .geometry import (
    TangentCamera,
    erp_lat_grid,
    erp_lon_grid,
    spherical_to_erp_pixel,
)


@dataclass(frozen=True)
class ErpImage:
    """Equirectangular raster: data (H, W) or (H, W, C) with a validity mask (H, W)."""

    data: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if data.shape[:2] != mask.shape:
            raise ParameterError("data and mask shapes disagree")
        h, w = mask.shape
        if w != 2 * h:
            raise ParameterError(f"ERP width must be 2x height, got {w}x{h}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_data(cls, data, mask=None) -> "ErpImage":
        data = np.asarray(data, dtype=float)
        if mask is None:
            mask = np.ones(data.shape[:2], dtype=bool)
        return cls(data, mask)

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else self.data.shape[2]


@dataclass(frozen=True)
class TangentImage:
    """Raster on a tangent camera's pixel grid with a validity mask."""

    camera: TangentCamera
    data: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if data.shape[:2] != mask.shape:
            raise ParameterError("data and mask shapes disagree")
        if mask.shape != (self.camera.height_px, self.camera.width_px):
            raise ParameterError(
                f"image {mask.shape} does not match camera "
                f"{(self.camera.height_px, self.camera.width_px)}"
            )
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_data(cls, camera, data, mask=None) -> "TangentImage":
        data = np.asarray(data, dtype=float)
        if mask is None:
            mask = np.ones(data.shape[:2], dtype=bool)
        return cls(camera, data, mask)

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else self.data.shape[2]


def _gather(data: np.ndarray, v: np.ndarray, u: np.ndarray) -> np.ndarray:
    return data[v, u]


def sample_bilinear(data, mask, u, v, wrap_u: bool):
    """Masked bilinear sample at continuous pixel coordinates (u, v).

    Weights of invalid or out-of-bounds corners are renormalised away; returns
    ``(values, valid)`` where valid is False iff no corner contributed.
    """
    data = np.asarray(data, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)

    u0f = np.floor(u)
    v0f = np.floor(v)
    fu = u - u0f
    fv = v - v0f
    u0 = u0f.astype(np.int64)
    v0 = v0f.astype(np.int64)
    u1 = u0 + 1
    v1 = v0 + 1

    if wrap_u:
        u0m, u1m = u0 % w, u1 % w
        in_u0 = np.ones_like(u0, dtype=bool)
        in_u1 = in_u0
    else:
        in_u0 = (u0 >= 0) & (u0 < w)
        in_u1 = (u1 >= 0) & (u1 < w)
        u0m = np.clip(u0, 0, w - 1)
        u1m = np.clip(u1, 0, w - 1)
    in_v0 = (v0 >= 0) & (v0 < h)
    in_v1 = (v1 >= 0) & (v1 < h)
    v0m = np.clip(v0, 0, h - 1)
    v1m = np.clip(v1, 0, h - 1)

    corners = (
        (v0m, u0m, in_v0 & in_u0, (1 - fu) * (1 - fv)),
        (v0m, u1m, in_v0 & in_u1, fu * (1 - fv)),
        (v1m, u0m, in_v1 & in_u0, (1 - fu) * fv),
        (v1m, u1m, in_v1 & in_u1, fu * fv),
    )

    multi = data.ndim == 3
    acc = np.zeros(u.shape + ((data.shape[2],) if multi else ()), dtype=float)
    wsum = np.zeros(u.shape, dtype=float)
    for vi, ui, inb, wgt in corners:
        ok = inb & _gather(mask, vi, ui)
        wv = np.where(ok, wgt, 0.0)
        vals = _gather(data, vi, ui)
        # invalid corners may hold non-finite data; zero them before weighting
        vals = np.where(ok[..., None] if multi else ok, vals, 0.0)
        acc += wv[..., None] * vals if multi else wv * vals
        wsum += wv
    valid = wsum > 0.0
    safe = np.where(valid, wsum, 1.0)
    out = acc / (safe[..., None] if multi else safe)
    if multi:
        out[~valid] = 0.0
    else:
        out = np.where(valid, out, 0.0)
    return out, valid


def sample_nearest(data, mask, u, v, wrap_u: bool):
    data = np.asarray(data, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    ur = np.rint(np.asarray(u, dtype=float)).astype(np.int64)
    vr = np.rint(np.asarray(v, dtype=float)).astype(np.int64)
    if wrap_u:
        ur %= w
        in_u = np.ones_like(ur, dtype=bool)
    else:
        in_u = (ur >= 0) & (ur < w)
        ur = np.clip(ur, 0, w - 1)
    in_v = (vr >= 0) & (vr < h)
    vr = np.clip(vr, 0, h - 1)
    valid = in_u & in_v & _gather(mask, vr, ur)
    vals = _gather(data, vr, ur)
    if data.ndim == 3:
        vals = np.where(valid[..., None], vals, 0.0)
    else:
        vals = np.where(valid, vals, 0.0)
    return vals, valid


_SAMPLERS = {"bilinear": sample_bilinear, "nearest": sample_nearest}


def _sampler(name: str):
    try:
        return _SAMPLERS[name]
    except KeyError:
        raise ParameterError(f"unknown filter {name!r}; expected one of {sorted(_SAMPLERS)}")


def erp_to_tangent(erp: ErpImage, camera: TangentCamera, filter: str = "bilinear") -> TangentImage:
    """Render the camera's tangent image by sampling the ERP raster."""
    sample = _sampler(filter)
    xs, ys = camera.pixel_plane_axes()
    x = np.broadcast_to(xs[None, :], (camera.height_px, camera.width_px))
    y = np.broadcast_to(ys[:, None], (camera.height_px, camera.width_px))
    lon, lat = camera.direction_from_plane(x, y)
    u, v = spherical_to_erp_pixel(lon, lat, erp.width, erp.height)
    vals, valid = sample(erp.data, erp.mask, u, v, wrap_u=True)
    return TangentImage(camera, vals, valid)


def tangent_to_erp(
    img: TangentImage, erp_width: int, erp_height: int, filter: str = "bilinear"
) -> ErpImage:
    """Project a tangent image onto the ERP grid; pixels outside the padded
    footprint are masked invalid."""
    sample = _sampler(filter)
    cam = img.camera
    lon = erp_lon_grid(erp_width)
    lat = erp_lat_grid(erp_height)
    x, y, valid = cam.plane_grid_from_lonlat(lon, lat)
    inside = valid & cam.contains_plane(x, y)

    shape = (erp_height, erp_width) + (() if img.data.ndim == 2 else (img.data.shape[2],))
    out = np.zeros(shape, dtype=float)
    out_mask = np.zeros((erp_height, erp_width), dtype=bool)

    u, v = cam.plane_to_pixel(x[inside], y[inside])
    vals, ok = sample(img.data, img.mask, u, v, wrap_u=False)
    out[inside] = vals
    out_mask[inside] = ok
    return ErpImage(out, out_mask)
