"""Disparity semantics: standardization and perspective-to-spherical conversion.

Perspective disparity is inverse depth along a tangent camera's optical axis;
spherical disparity is inverse radial distance from the shared centre of
projection and is comparable across all tangent cameras.  A perspective value
becomes spherical by multiplying with the cosine of the angle between the
pixel ray and the optical axis (z/r of the unit ray).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateInputError, ParameterError, SemanticsError
from .geometry import TangentCamera
from .resampling import ErpImage, TangentImage

PERSPECTIVE = "perspective"
SPHERICAL = "spherical"

# mean absolute deviations below this mean the map carries no usable signal
MAD_FLOOR = 1e-12


@dataclass(frozen=True)
class DisparityMap:
    """A single-channel disparity field with semantics bookkeeping."""

    image: TangentImage | ErpImage
    semantics: str
    standardized: bool = False

    def __post_init__(self):
        if self.semantics not in (PERSPECTIVE, SPHERICAL):
            raise ParameterError(f"unknown semantics {self.semantics!r}")
        if self.image.channels != 1:
            raise ParameterError("disparity maps are single-channel")

    @property
    def data(self) -> np.ndarray:
        return self.image.data

    @property
    def mask(self) -> np.ndarray:
        return self.image.mask


def median_and_mad(values) -> tuple[float, float]:
    """Lower median and the mean absolute deviation about it.

    The lower median (element at index (n-1)//2 of the sorted values) keeps the
    statistic deterministic for even counts.
    """
    vals = np.asarray(values, dtype=float).ravel()
    if vals.size == 0:
        raise ParameterError("median of empty input")
    k = (vals.size - 1) // 2
    med = float(np.partition(vals, k)[k])
    mad = float(np.abs(vals - med).mean())
    return med, mad


def standardize(d: DisparityMap) -> DisparityMap:
    """Shift by the median and divide by the mean absolute deviation, computed
    over valid pixels only."""
    vals = d.data[d.mask]
    if vals.size == 0:
        raise ParameterError("cannot standardize a fully masked map")
    med, mad = median_and_mad(vals)
    if mad < MAD_FLOOR:
        raise DegenerateInputError(
            f"mean absolute deviation {mad:.3e} below {MAD_FLOOR:.0e}; map is constant"
        )
    new_data = (d.data - med) / mad
    if isinstance(d.image, TangentImage):
        image = TangentImage(d.image.camera, new_data, d.mask)
    else:
        image = ErpImage(new_data, d.mask)
    return replace(d, image=image, standardized=True)


def perspective_to_spherical_factor(camera: TangentCamera) -> np.ndarray:
    """Per-pixel cosine between the pixel ray and the optical axis, shape (H, W)."""
    xs, ys = camera.pixel_plane_axes()
    return 1.0 / np.sqrt(1.0 + xs[None, :] ** 2 + ys[:, None] ** 2)


def convert_to_spherical(d: DisparityMap, camera: TangentCamera) -> DisparityMap:
    """Convert perspective disparity on ``camera``'s grid to spherical disparity."""
    if d.semantics != PERSPECTIVE:
        raise SemanticsError(f"expected perspective disparity, got {d.semantics!r}")
    if not isinstance(d.image, TangentImage):
        raise SemanticsError("perspective disparity must live on a tangent image")
    own = d.image.camera
    if own.face_index != camera.face_index or (own.width_px, own.height_px) != (
        camera.width_px,
        camera.height_px,
    ):
        raise SemanticsError(
            f"map belongs to face {own.face_index}, not face {camera.face_index}"
        )
    data = d.data * perspective_to_spherical_factor(camera)
    image = TangentImage(d.image.camera, data, d.mask)
    return replace(d, image=image, semantics=SPHERICAL)
