"""Analytic test scenes standing in for a real depth estimator.

A box room (optionally with a sphere inside) has closed-form ray depth from
the centre of projection, so ground-truth ERP depth and exact per-face
perspective disparity can be rendered analytically.  Per-face affine
corruption (random scale/offset, optionally plus a smooth low-frequency
field) mimics the per-prediction scale/shift ambiguity of relative-disparity
estimators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .disparity import PERSPECTIVE, DisparityMap
from .errors import ParameterError
from .geometry import IcosahedronLayout, TangentCamera, erp_lat_grid, erp_lon_grid, lonlat_to_unit
from .resampling import ErpImage, TangentImage

SCENE_KINDS = ("box", "sphere_in_box")


@dataclass(frozen=True)
class SyntheticScene:
    kind: str = "box"
    room_half_extents: tuple[float, float, float] = (2.2, 1.7, 1.3)
    sphere_center: tuple[float, float, float] = (0.9, -0.55, -0.35)
    sphere_radius: float = 0.45
    # provider outputs are relative disparity in arbitrary units; the gain
    # models that (raw estimator values are far larger than 1/metres)
    disparity_gain: float = 10.0
    corruption_scale_range: tuple[float, float] = (0.5, 2.0)
    corruption_offset_range: tuple[float, float] = (-0.5, 0.5)
    smooth_field_amplitude: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.kind not in SCENE_KINDS:
            raise ParameterError(f"unknown scene kind {self.kind!r}")
        if min(self.room_half_extents) <= 0:
            raise ParameterError("room half extents must be positive")
        lo, hi = self.corruption_scale_range
        if lo <= 0 or hi < lo:
            raise ParameterError("corruption scales must be positive with lo <= hi")

    # -- geometry -------------------------------------------------------------

    def ray_depth(self, dirs: np.ndarray) -> np.ndarray:
        """Radial distance from the origin to the scene surface, dirs (..., 3)."""
        he = np.asarray(self.room_half_extents)
        with np.errstate(divide="ignore"):
            t_axis = he / np.maximum(np.abs(dirs), 1e-300)
        depth = t_axis.min(axis=-1)
        if self.kind == "sphere_in_box":
            c = np.asarray(self.sphere_center)
            dc = dirs @ c
            disc = dc**2 - (float(c @ c) - self.sphere_radius**2)
            hit = disc >= 0
            t_sphere = np.where(hit, dc - np.sqrt(np.where(hit, disc, 0.0)), np.inf)
            t_sphere = np.where(t_sphere > 0, t_sphere, np.inf)
            depth = np.minimum(depth, t_sphere)
        return depth

    @property
    def max_depth(self) -> float:
        return float(np.linalg.norm(self.room_half_extents))

    def texture(self, lon, lat) -> np.ndarray:
        """Smooth band-limited RGB texture in [0, 1] over the sphere, (..., 3)."""
        lon = np.asarray(lon, dtype=float)
        lat = np.asarray(lat, dtype=float)
        r = 0.5 + 0.25 * np.sin(2 * lon) * np.cos(lat) + 0.15 * np.sin(3 * lat)
        g = 0.5 + 0.25 * np.cos(lon) * np.cos(2 * lat) + 0.10 * np.sin(2 * lat + 0.7)
        b = 0.5 + 0.20 * np.sin(lon + 1.1) * np.cos(lat) + 0.15 * np.cos(3 * lat - 0.4)
        return np.clip(np.stack(np.broadcast_arrays(r, g, b), axis=-1), 0.0, 1.0)


def render_erp_depth(scene: SyntheticScene, erp_width: int, erp_height: int) -> ErpImage:
    lon = erp_lon_grid(erp_width)
    lat = erp_lat_grid(erp_height)
    dirs = lonlat_to_unit(lon[None, :], lat[:, None])
    return ErpImage.from_data(scene.ray_depth(dirs))


def render_erp_disparity(scene: SyntheticScene, erp_width: int, erp_height: int) -> ErpImage:
    depth = render_erp_depth(scene, erp_width, erp_height)
    return ErpImage(1.0 / depth.data, depth.mask)


def render_erp_rgb(scene: SyntheticScene, erp_width: int, erp_height: int) -> ErpImage:
    lon = erp_lon_grid(erp_width)[None, :]
    lat = erp_lat_grid(erp_height)[:, None]
    return ErpImage.from_data(scene.texture(lon, lat))


def render_perspective_disparity(scene: SyntheticScene, camera: TangentCamera) -> TangentImage:
    """Exact perspective (inverse z-depth) disparity on the camera grid, in
    the provider's arbitrary units (scene.disparity_gain per inverse length)."""
    xs, ys = camera.pixel_plane_axes()
    x = np.broadcast_to(xs[None, :], (camera.height_px, camera.width_px))
    y = np.broadcast_to(ys[:, None], (camera.height_px, camera.width_px))
    dirs = camera.tangent_vector + x[..., None] * camera.axis_x + y[..., None] * camera.axis_y
    dirs = dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)
    radial = scene.ray_depth(dirs)
    # z-depth = radial * cos(angle to axis); disparity = sqrt(1+x^2+y^2)/radial
    persp = scene.disparity_gain * np.sqrt(1.0 + x**2 + y**2) / radial
    return TangentImage.from_data(camera, persp)


def _smooth_field(camera: TangentCamera, amplitude: float, phase: np.ndarray) -> np.ndarray:
    tx = (np.arange(camera.width_px) + 0.5) / camera.width_px
    ty = (np.arange(camera.height_px) + 0.5) / camera.height_px
    return amplitude * np.sin(math.tau * (tx[None, :] + phase[0])) * np.sin(
        math.tau * (ty[:, None] + phase[1])
    )


@dataclass(frozen=True)
class SyntheticData:
    gt_depth: ErpImage
    gt_disparity: ErpImage
    perspective_maps: list[DisparityMap]
    corruption: list[dict]


def generate_synthetic(
    scene: SyntheticScene,
    layout: IcosahedronLayout,
    erp_width: int,
    erp_height: int,
    corrupt: bool = True,
) -> SyntheticData:
    """Render exact ground truth plus per-face affinely corrupted perspective
    disparity maps.  The corruption table is reproducible from the scene seed."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([scene.rng_seed])))
    gt_depth = render_erp_depth(scene, erp_width, erp_height)
    gt_disparity = ErpImage(1.0 / gt_depth.data, gt_depth.mask)

    maps = []
    table = []
    for cam in layout.cameras:
        exact = render_perspective_disparity(scene, cam)
        if corrupt:
            s_lo, s_hi = scene.corruption_scale_range
            o_lo, o_hi = scene.corruption_offset_range
            s = float(rng.uniform(s_lo, s_hi))
            o = float(rng.uniform(o_lo, o_hi))
            phase = rng.uniform(0.0, 1.0, size=2)
        else:
            s, o = 1.0, 0.0
            phase = np.zeros(2)
        data = s * exact.data + o
        if corrupt and scene.smooth_field_amplitude > 0:
            data = data + _smooth_field(cam, scene.smooth_field_amplitude, phase)
        maps.append(
            DisparityMap(TangentImage(cam, data, exact.mask), semantics=PERSPECTIVE)
        )
        table.append(
            {
                "face": cam.face_index,
                "scale": s,
                "offset": o,
                "smooth_phase": [float(p) for p in phase],
            }
        )
    return SyntheticData(gt_depth, gt_disparity, maps, table)
