"""Icosahedral tangent cameras, gnomonic projection and ERP pixel conventions.

A spherical panorama is covered by 20 perspective cameras, one per face of a
canonical icosahedron (one vertex at each pole, faces in rings of 5).  Each
camera looks along the unit vector through its face centroid and images the
gnomonic (central) projection of the sphere onto the plane tangent at that
point.  Great circles project to straight lines, so a spherical face projects
to a planar triangle; the camera's image rectangle is the tight axis-aligned
bounding box of that triangle, enlarged by the padding factor: each boundary
moves outward by ``padding`` times the base size, so the extents grow by
``1 + 2 * padding``.  At the default padding of 0.3 every spherical direction
is covered by between 2 and 5 cameras.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi

# cos(angular distance) at or below this counts as the opposite hemisphere
HEMISPHERE_COS_EPS = 1e-9

# |z-component| above this marks a tangent point at a pole, which needs a
# fixed reference meridian instead of the north-up frame
_POLAR_AXIS_EPS = 1.0 - 1e-12


def normalize_longitude(lon):
    """Wrap longitude(s) into [-pi, pi)."""
    return (np.asarray(lon, dtype=float) + math.pi) % TWO_PI - math.pi


def lonlat_to_unit(lon, lat) -> np.ndarray:
    """Unit direction vectors, shape (..., 3), for broadcastable lon/lat."""
    lon = np.asarray(lon, dtype=float)
    lat = np.asarray(lat, dtype=float)
    cl = np.cos(lat)
    return np.stack(
        np.broadcast_arrays(cl * np.cos(lon), cl * np.sin(lon), np.sin(lat)), axis=-1
    )


def unit_to_lonlat(v) -> tuple[np.ndarray, np.ndarray]:
    """Longitude in [-pi, pi) and latitude in [-pi/2, pi/2] of vectors (..., 3)."""
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v, axis=-1)
    lon = normalize_longitude(np.arctan2(v[..., 1], v[..., 0]))
    lat = np.arcsin(np.clip(v[..., 2] / norm, -1.0, 1.0))
    return lon, lat


@dataclass(frozen=True)
class SphericalCoord:
    """A direction on the unit sphere; lon in [-pi, pi), lat in [-pi/2, pi/2]."""

    lon: float
    lat: float

    def __post_init__(self):
        object.__setattr__(self, "lon", float(normalize_longitude(self.lon)))
        object.__setattr__(self, "lat", float(np.clip(self.lat, -HALF_PI, HALF_PI)))

    def to_unit_vector(self) -> np.ndarray:
        cl = math.cos(self.lat)
        return np.array(
            [cl * math.cos(self.lon), cl * math.sin(self.lon), math.sin(self.lat)]
        )

    @classmethod
    def from_unit_vector(cls, v) -> "SphericalCoord":
        lon, lat = unit_to_lonlat(np.asarray(v, dtype=float))
        return cls(float(lon), float(lat))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class TangentCamera:
    """One gnomonic tangent camera.

    The image rectangle lives in the tangent plane spanned by ``axis_x`` (east)
    and ``axis_y`` (north "up"), with the principal point -- the projection of
    ``tangent_point`` -- at the plane origin.  The rectangle is centred at
    ``(center_x, center_y)`` with *padded* half extents ``half_extent_x/y``;
    it is generally not centred on the principal point because the tight bound
    of a projected triangle is asymmetric.
    """

    face_index: int
    tangent_point: SphericalCoord
    axis_x: np.ndarray
    axis_y: np.ndarray
    center_x: float
    center_y: float
    half_extent_x: float
    half_extent_y: float
    padding: float
    width_px: int
    height_px: int

    def __post_init__(self):
        if not (0.0 <= self.padding <= 1.0):
            raise ParameterError(f"padding must be in [0, 1], got {self.padding}")
        if self.half_extent_x <= 0 or self.half_extent_y <= 0:
            raise ParameterError("half extents must be strictly positive")
        if self.width_px < 2 or self.height_px < 2:
            raise ParameterError("pixel counts must be >= 2")
        object.__setattr__(self, "axis_x", _frozen(self.axis_x))
        object.__setattr__(self, "axis_y", _frozen(self.axis_y))

    # -- derived geometry ---------------------------------------------------

    @property
    def extent_multiplier(self) -> float:
        """Padded over un-padded extent: boundaries move out by padding x base size."""
        return 1.0 + 2.0 * self.padding

    @property
    def unpadded_half_extent_x(self) -> float:
        return self.half_extent_x / self.extent_multiplier

    @property
    def unpadded_half_extent_y(self) -> float:
        return self.half_extent_y / self.extent_multiplier

    @property
    def tangent_vector(self) -> np.ndarray:
        return self.tangent_point.to_unit_vector()

    # -- gnomonic projection ------------------------------------------------

    def plane_from_direction(self, lon, lat):
        """Gnomonic plane coordinates of broadcastable lon/lat directions.

        Returns ``(x, y, valid)``; invalid entries (opposite hemisphere) hold
        zeros in x/y.
        """
        v = lonlat_to_unit(lon, lat)
        t = self.tangent_vector
        c = v @ t
        valid = c > HEMISPHERE_COS_EPS
        safe = np.where(valid, c, 1.0)
        x = np.where(valid, (v @ self.axis_x) / safe, 0.0)
        y = np.where(valid, (v @ self.axis_y) / safe, 0.0)
        return x, y, valid

    def plane_grid_from_lonlat(self, lon: np.ndarray, lat: np.ndarray):
        """Like :meth:`plane_from_direction` on the outer grid lat x lon.

        Separable fast path used for whole-ERP operations: ``lon`` has shape
        (W,), ``lat`` shape (H,), outputs have shape (H, W).
        """
        coslat = np.cos(lat)[:, None]
        sinlat = np.sin(lat)[:, None]
        coslon = np.cos(lon)[None, :]
        sinlon = np.sin(lon)[None, :]

        def dot(a):
            return coslat * (a[0] * coslon + a[1] * sinlon) + sinlat * a[2]

        c = dot(self.tangent_vector)
        valid = c > HEMISPHERE_COS_EPS
        safe = np.where(valid, c, 1.0)
        x = np.where(valid, dot(self.axis_x) / safe, 0.0)
        y = np.where(valid, dot(self.axis_y) / safe, 0.0)
        return x, y, valid

    def direction_from_plane(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        """Inverse gnomonic projection: plane coords to (lon, lat)."""
        x = np.asarray(x, dtype=float)[..., None]
        y = np.asarray(y, dtype=float)[..., None]
        d = self.tangent_vector + x * self.axis_x + y * self.axis_y
        return unit_to_lonlat(d)

    def contains_plane(self, x, y):
        """True where plane coordinates fall inside the padded rectangle."""
        return (np.abs(np.asarray(x) - self.center_x) <= self.half_extent_x) & (
            np.abs(np.asarray(y) - self.center_y) <= self.half_extent_y
        )

    # -- pixel mapping --------------------------------------------------------

    def pixel_to_plane(self, u, v):
        """Plane coordinates of continuous pixel coordinates (column u, row v).

        Pixel centres sit at integer (u, v); row 0 is the top of the image
        (largest plane y).
        """
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        x = self.center_x + ((u + 0.5) / self.width_px * 2.0 - 1.0) * self.half_extent_x
        y = self.center_y + (1.0 - (v + 0.5) / self.height_px * 2.0) * self.half_extent_y
        return x, y

    def plane_to_pixel(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        u = ((x - self.center_x) / self.half_extent_x + 1.0) / 2.0 * self.width_px - 0.5
        v = (1.0 - (y - self.center_y) / self.half_extent_y) / 2.0 * self.height_px - 0.5
        return u, v

    def pixel_plane_axes(self) -> tuple[np.ndarray, np.ndarray]:
        """1-D plane coordinates of pixel centres: (xs of shape (W,), ys of shape (H,))."""
        xs, _ = self.pixel_to_plane(np.arange(self.width_px), 0.0)
        _, ys = self.pixel_to_plane(0.0, np.arange(self.height_px))
        return xs, ys

    def normalized_image_coords(self, x, y):
        """Map plane coords to [0, 1]^2 over the padded rectangle (0,0 = top-left)."""
        tx = (np.asarray(x) - (self.center_x - self.half_extent_x)) / (2.0 * self.half_extent_x)
        ty = ((self.center_y + self.half_extent_y) - np.asarray(y)) / (2.0 * self.half_extent_y)
        return tx, ty

    def corner_directions(self) -> np.ndarray:
        """Unit directions of the four padded rectangle corners, shape (4, 3)."""
        cx, cy = self.center_x, self.center_y
        hx, hy = self.half_extent_x, self.half_extent_y
        lon, lat = self.direction_from_plane(
            np.array([cx - hx, cx + hx, cx + hx, cx - hx]),
            np.array([cy - hy, cy - hy, cy + hy, cy + hy]),
        )
        return lonlat_to_unit(lon, lat)

    def latitude_range(self, n_boundary: int = 128) -> tuple[float, float]:
        """Latitude interval spanned by the padded footprint."""
        cx, cy = self.center_x, self.center_y
        hx, hy = self.half_extent_x, self.half_extent_y
        ts = np.linspace(-1.0, 1.0, n_boundary)
        bx = np.concatenate([cx + hx * ts, cx + hx * ts, np.full(n_boundary, cx - hx), np.full(n_boundary, cx + hx)])
        by = np.concatenate([np.full(n_boundary, cy - hy), np.full(n_boundary, cy + hy), cy + hy * ts, cy + hy * ts])
        _, lat = self.direction_from_plane(bx, by)
        lo, hi = float(lat.min()), float(lat.max())
        # a footprint containing a pole spans all longitudes up to that pole
        if self.contains_plane(*self.plane_from_direction(0.0, HALF_PI)[:2]) and self.plane_from_direction(0.0, HALF_PI)[2]:
            hi = HALF_PI
        if self.contains_plane(*self.plane_from_direction(0.0, -HALF_PI)[:2]) and self.plane_from_direction(0.0, -HALF_PI)[2]:
            lo = -HALF_PI
        return lo, hi


@dataclass(frozen=True)
class IcosahedronLayout:
    """The ordered 20-camera icosahedral layout."""

    cameras: tuple[TangentCamera, ...]

    def __post_init__(self):
        if len(self.cameras) != 20:
            raise ParameterError(f"expected 20 cameras, got {len(self.cameras)}")

    @property
    def padding(self) -> float:
        return self.cameras[0].padding

    def to_json_dict(self) -> dict:
        cams = []
        for c in self.cameras:
            cams.append(
                {
                    "face": c.face_index,
                    "tangent_lon": c.tangent_point.lon,
                    "tangent_lat": c.tangent_point.lat,
                    "axis_x": list(c.axis_x),
                    "axis_y": list(c.axis_y),
                    "center_x": c.center_x,
                    "center_y": c.center_y,
                    "half_extent_x": c.half_extent_x,
                    "half_extent_y": c.half_extent_y,
                    "padding": c.padding,
                    "width_px": c.width_px,
                    "height_px": c.height_px,
                }
            )
        d = {"kind": "icosahedron_tangent_layout", "cameras": cams}
        d["layout_hash"] = layout_hash(d)
        return d


def layout_hash(layout_dict: dict) -> str:
    """SHA-256 over the canonical camera description (hash field excluded)."""
    body = {k: v for k, v in layout_dict.items() if k != "layout_hash"}
    return hashlib.sha256(
        json.dumps(body, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


def layout_from_json_dict(d: dict) -> IcosahedronLayout:
    cams = []
    for c in sorted(d["cameras"], key=lambda c: c["face"]):
        cams.append(
            TangentCamera(
                face_index=c["face"],
                tangent_point=SphericalCoord(c["tangent_lon"], c["tangent_lat"]),
                axis_x=np.array(c["axis_x"]),
                axis_y=np.array(c["axis_y"]),
                center_x=c["center_x"],
                center_y=c["center_y"],
                half_extent_x=c["half_extent_x"],
                half_extent_y=c["half_extent_y"],
                padding=c["padding"],
                width_px=c["width_px"],
                height_px=c["height_px"],
            )
        )
    return IcosahedronLayout(cameras=tuple(cams))


# -- icosahedron construction ----------------------------------------------


def icosahedron_face_vertices() -> np.ndarray:
    """Vertices of the 20 faces, shape (20, 3, 3), unit sphere.

    Canonical orientation: a vertex at each pole, vertex rings at latitude
    +/- atan(1/2), upper-ring longitudes at multiples of 72 degrees.  Face
    order: 5 around the north pole, 10 in the equatorial band (alternating
    apex-down / apex-up), 5 around the south pole.
    """
    ring_lat = math.atan(0.5)
    top = np.array([0.0, 0.0, 1.0])
    bottom = np.array([0.0, 0.0, -1.0])
    upper = lonlat_to_unit(np.radians(72.0 * np.arange(5)), np.full(5, ring_lat))
    lower = lonlat_to_unit(np.radians(72.0 * np.arange(5) + 36.0), np.full(5, -ring_lat))

    faces = []
    for i in range(5):
        faces.append([top, upper[i], upper[(i + 1) % 5]])
    for i in range(5):
        faces.append([upper[i], upper[(i + 1) % 5], lower[i]])
    for i in range(5):
        faces.append([lower[i], lower[(i + 1) % 5], upper[(i + 1) % 5]])
    for i in range(5):
        faces.append([bottom, lower[i], lower[(i + 1) % 5]])
    return np.array(faces)


def _camera_frame(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Tangent-plane basis: axis_y points along the great circle to the north
    pole ("up"), axis_x east.  Pole-tangent cameras use a fixed meridian."""
    if abs(t[2]) >= _POLAR_AXIS_EPS:
        ex = np.array([0.0, 1.0, 0.0])
    else:
        ex = np.cross([0.0, 0.0, 1.0], t)
        ex = ex / np.linalg.norm(ex)
    ey = np.cross(t, ex)
    return ex, ey / np.linalg.norm(ey)


def build_icosahedron_layout(
    padding: float, width_px: int = 400, height_px: int = 346
) -> IcosahedronLayout:
    """Build the 20 tangent cameras.

    Each camera's un-padded rectangle is the tight bounding box of its face's
    gnomonic image; the stored extents move every boundary outward by
    ``padding`` times the base size (multiplier ``1 + 2 * padding`` about the
    rectangle centre).
    """
    if not (0.0 <= padding <= 1.0):
        raise ParameterError(f"padding must be in [0, 1], got {padding}")
    if width_px < 2 or height_px < 2:
        raise ParameterError("tangent resolution must be at least 2x2")

    cameras = []
    for face_index, verts in enumerate(icosahedron_face_vertices()):
        centroid = verts.sum(axis=0)
        t = centroid / np.linalg.norm(centroid)
        ex, ey = _camera_frame(t)
        c = verts @ t
        px = (verts @ ex) / c
        py = (verts @ ey) / c
        cx = 0.5 * (px.min() + px.max())
        cy = 0.5 * (py.min() + py.max())
        hx = 0.5 * (px.max() - px.min())
        hy = 0.5 * (py.max() - py.min())
        mult = 1.0 + 2.0 * padding
        cameras.append(
            TangentCamera(
                face_index=face_index,
                tangent_point=SphericalCoord.from_unit_vector(t),
                axis_x=ex,
                axis_y=ey,
                center_x=float(cx),
                center_y=float(cy),
                half_extent_x=float(hx * mult),
                half_extent_y=float(hy * mult),
                padding=padding,
                width_px=width_px,
                height_px=height_px,
            )
        )
    return IcosahedronLayout(cameras=tuple(cameras))


# -- scalar spec operations ---------------------------------------------------


def gnomonic_forward(camera: TangentCamera, point: SphericalCoord):
    """Project a spherical point into the camera's gnomonic plane.

    Returns ``(x, y, valid)``; valid is False on the opposite hemisphere.
    """
    x, y, valid = camera.plane_from_direction(point.lon, point.lat)
    return float(x), float(y), bool(valid)


def gnomonic_inverse(camera: TangentCamera, x: float, y: float) -> SphericalCoord:
    """Exact inverse of :func:`gnomonic_forward` on its valid domain."""
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ParameterError("plane coordinates must be finite")
    lon, lat = camera.direction_from_plane(x, y)
    return SphericalCoord(float(lon), float(lat))


# -- ERP pixel convention -----------------------------------------------------


def _check_erp_dims(width: int, height: int):
    if width != 2 * height:
        raise ParameterError(f"ERP width must be 2x height, got {width}x{height}")


def erp_pixel_to_spherical(u, v, width: int, height: int):
    """Pixel-centre convention: lon = ((u+0.5)/W)*2pi - pi, lat = pi/2 - ((v+0.5)/H)*pi."""
    _check_erp_dims(width, height)
    lon = (np.asarray(u, dtype=float) + 0.5) / width * TWO_PI - math.pi
    lat = HALF_PI - (np.asarray(v, dtype=float) + 0.5) / height * math.pi
    return lon, lat


def spherical_to_erp_pixel(lon, lat, width: int, height: int):
    """Continuous pixel coordinates; longitude wraps around the seam."""
    _check_erp_dims(width, height)
    u = (normalize_longitude(lon) + math.pi) / TWO_PI * width - 0.5
    v = (HALF_PI - np.asarray(lat, dtype=float)) / math.pi * height - 0.5
    return u, v


def erp_lon_grid(width: int) -> np.ndarray:
    return (np.arange(width) + 0.5) / width * TWO_PI - math.pi


def erp_lat_grid(height: int) -> np.ndarray:
    return HALF_PI - (np.arange(height) + 0.5) / height * math.pi


def coverage_map(layout: IcosahedronLayout, erp_width: int, erp_height: int) -> np.ndarray:
    """Per-ERP-pixel count of cameras whose padded footprint contains the pixel."""
    _check_erp_dims(erp_width, erp_height)
    lon = erp_lon_grid(erp_width)
    lat = erp_lat_grid(erp_height)
    counts = np.zeros((erp_height, erp_width), dtype=np.int32)
    for cam in layout.cameras:
        x, y, valid = cam.plane_grid_from_lonlat(lon, lat)
        counts += (valid & cam.contains_plane(x, y)).astype(np.int32)
    return counts


def footprint_mask(camera: TangentCamera, erp_width: int, erp_height: int) -> np.ndarray:
    """Boolean ERP mask of the camera's padded footprint."""
    _check_erp_dims(erp_width, erp_height)
    x, y, valid = camera.plane_grid_from_lonlat(erp_lon_grid(erp_width), erp_lat_grid(erp_height))
    return valid & camera.contains_plane(x, y)
