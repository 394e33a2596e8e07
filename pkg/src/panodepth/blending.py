"""Merging aligned per-face ERP disparity maps into one spherical map.

Four weighting schemes (nearest tangent point, uniform mean, radial decay,
frustum decay) plus a gradient-domain blend: the output minimises the
weight-modulated mismatch to every face's forward-difference gradients with a
weak fidelity anchor to the nearest-neighbour stitch.  The resulting normal
equations are symmetric positive definite and solved by conjugate gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .errors import ParameterError
from .geometry import IcosahedronLayout, erp_lat_grid, erp_lon_grid
from .resampling import ErpImage

SCHEMES = ("nn", "mean", "radial", "frustum")


@dataclass(frozen=True)
class BlendConfig:
    lambda_fidelity: float = 0.1
    radial_decay_start_deg: float = 15.0
    frustum_decay_start: float = 0.3
    solver_tolerance: float = 1e-8
    solver_max_iterations: int = 5000

    def __post_init__(self):
        if min(
            self.lambda_fidelity,
            self.radial_decay_start_deg,
            self.frustum_decay_start,
            self.solver_tolerance,
            self.solver_max_iterations,
        ) <= 0:
            raise ParameterError("blend configuration values must be positive")


@dataclass(frozen=True)
class BlendWeightField:
    scheme: str
    face_index: int
    weights: np.ndarray  # (H, W) in [0, 1]


def _face_geometry(cam, lon, lat):
    x, y, valid = cam.plane_grid_from_lonlat(lon, lat)
    inside = valid & cam.contains_plane(x, y)
    return x, y, inside


def _ray_exit_scale(cam, x, y):
    """Smallest positive factor scaling (x, y) onto the padded rectangle
    boundary along the ray from the principal point."""
    with np.errstate(divide="ignore", invalid="ignore"):
        lx = np.where(
            x > 0,
            (cam.center_x + cam.half_extent_x) / x,
            np.where(x < 0, (cam.center_x - cam.half_extent_x) / x, np.inf),
        )
        ly = np.where(
            y > 0,
            (cam.center_y + cam.half_extent_y) / y,
            np.where(y < 0, (cam.center_y - cam.half_extent_y) / y, np.inf),
        )
    return np.minimum(lx, ly)


def _frustum_coordinate(cam, x, y):
    """Smallest lam >= 0 with (x, y) inside the rectangle scaled by lam about
    the principal point."""
    fx = np.maximum(
        x / (cam.center_x + cam.half_extent_x), x / (cam.center_x - cam.half_extent_x)
    )
    fy = np.maximum(
        y / (cam.center_y + cam.half_extent_y), y / (cam.center_y - cam.half_extent_y)
    )
    return np.maximum(np.maximum(fx, fy), 0.0)


def compute_weights(
    layout: IcosahedronLayout,
    scheme: str,
    erp_width: int,
    erp_height: int,
    config: BlendConfig | None = None,
) -> list[BlendWeightField]:
    """Per-face blending weights over the ERP grid.

    mean/radial/frustum weights are renormalised so covered pixels sum to one;
    nn selects exactly one face per pixel.
    """
    if scheme not in SCHEMES:
        raise ParameterError(f"unknown blend scheme {scheme!r}; expected one of {SCHEMES}")
    config = config or BlendConfig()
    lon = erp_lon_grid(erp_width)
    lat = erp_lat_grid(erp_height)
    coslat = np.cos(lat)[:, None]
    sinlat = np.sin(lat)[:, None]
    coslon = np.cos(lon)[None, :]
    sinlon = np.sin(lon)[None, :]

    if scheme == "nn":
        best = np.full((erp_height, erp_width), -np.inf)
        winner = np.full((erp_height, erp_width), -1, dtype=np.int8)
        for cam in layout.cameras:
            t = cam.tangent_vector
            c = coslat * (t[0] * coslon + t[1] * sinlon) + sinlat * t[2]
            upd = c > best
            best[upd] = c[upd]
            winner[upd] = cam.face_index
        return [
            BlendWeightField("nn", cam.face_index, (winner == cam.face_index).astype(float))
            for cam in layout.cameras
        ]

    raw = []
    inside_masks = []
    theta0 = math.radians(config.radial_decay_start_deg)
    for cam in layout.cameras:
        x, y, inside = _face_geometry(cam, lon, lat)
        inside_masks.append(inside)
        if scheme == "mean":
            w = inside.astype(float)
        elif scheme == "radial":
            r = np.hypot(x, y)
            theta = np.arctan(r)
            lam = _ray_exit_scale(cam, x, y)
            with np.errstate(invalid="ignore"):
                theta_b = np.arctan(np.where(np.isfinite(lam * r), lam * r, np.inf))
            span = np.maximum(theta_b - theta0, 1e-12)
            w = np.where(theta <= theta0, 1.0, np.clip((theta_b - theta) / span, 0.0, 1.0))
            w = np.where(inside, w, 0.0)
        else:  # frustum
            f = _frustum_coordinate(cam, x, y)
            w = np.clip((1.0 - f) / config.frustum_decay_start, 0.0, 1.0)
            w = np.where(inside, w, 0.0)
        raw.append(w)

    total = np.sum(raw, axis=0)
    coverage = np.sum(inside_masks, axis=0)
    # boundary pixels where every covering face decayed to zero fall back to
    # uniform weights over the covering faces
    degenerate = (total <= 0.0) & (coverage > 0)
    if degenerate.any():
        for w, inside in zip(raw, inside_masks):
            w[degenerate & inside] = 1.0
        total = np.sum(raw, axis=0)
    safe = np.where(total > 0.0, total, 1.0)
    return [
        BlendWeightField(scheme, cam.face_index, w / safe)
        for cam, w in zip(layout.cameras, raw)
    ]


def stitch_nn(erp_maps: list[ErpImage], nn_weights: list[BlendWeightField]) -> ErpImage:
    """Per-pixel copy from the face whose tangent point is angularly closest."""
    h, w = erp_maps[0].mask.shape
    out = np.zeros((h, w))
    filled = np.zeros((h, w), dtype=bool)
    for m, wf in zip(erp_maps, nn_weights):
        sel = (wf.weights > 0.5) & m.mask & ~filled
        out[sel] = m.data[sel]
        filled |= sel
    # rasterisation can leave a winner's own projection masked right at its
    # footprint edge; fill such pixels from any other covering face
    for m in erp_maps:
        sel = ~filled & m.mask
        if sel.any():
            out[sel] = m.data[sel]
            filled |= sel
    return ErpImage(out, filled)


def blend_weighted(erp_maps: list[ErpImage], weights: list[BlendWeightField]) -> ErpImage:
    """Convex per-pixel combination; weights renormalised over valid maps."""
    h, w = erp_maps[0].mask.shape
    first = erp_maps[0].data
    multi = first.ndim == 3
    acc = np.zeros_like(first)
    wsum = np.zeros((h, w))
    for m, wf in zip(erp_maps, weights):
        wv = np.where(m.mask, wf.weights, 0.0)
        acc += wv[..., None] * m.data if multi else wv * m.data
        wsum += wv
    valid = wsum > 0.0
    safe = np.where(valid, wsum, 1.0)
    out = acc / (safe[..., None] if multi else safe)
    if multi:
        out[~valid] = 0.0
    else:
        out = np.where(valid, out, 0.0)
    return ErpImage(out, valid)


@dataclass
class PoissonStats:
    converged: bool = True
    iterations: int = 0
    warnings: list[str] = field(default_factory=list)


def _edge_targets(erp_maps, weights, axis):
    """Weighted average forward-difference gradients along one axis.

    Returns (target, weight_sum) where an edge exists wherever at least one
    face is valid at both endpoints; axis 1 wraps at the longitude seam,
    axis 0 does not.
    """
    h, w = erp_maps[0].mask.shape
    g_acc = np.zeros((h, w))
    w_acc = np.zeros((h, w))
    for m, wf in zip(erp_maps, weights):
        nxt_mask = np.roll(m.mask, -1, axis=axis)
        nxt_data = np.roll(m.data, -1, axis=axis)
        both = m.mask & nxt_mask
        if axis == 0:
            both[-1, :] = False
        g_acc += np.where(both, wf.weights * (nxt_data - m.data), 0.0)
        w_acc += np.where(both, wf.weights, 0.0)
    return g_acc, w_acc


def blend_poisson(
    erp_maps: list[ErpImage],
    frustum_weights: list[BlendWeightField],
    d_nn: ErpImage,
    config: BlendConfig | None = None,
    exclude_mask: np.ndarray | None = None,
) -> tuple[ErpImage, PoissonStats]:
    """Gradient-domain blend anchored to the nearest-neighbour stitch.

    Pixels outside the solve domain (uncovered, or excluded, e.g. pole caps)
    keep the nearest-neighbour value where it exists and stay masked
    otherwise.
    """
    config = config or BlendConfig()
    h, w = d_nn.mask.shape
    solve = d_nn.mask.copy()
    if exclude_mask is not None:
        solve &= ~np.asarray(exclude_mask, dtype=bool)
    n_unknown = int(solve.sum())
    stats = PoissonStats()
    if n_unknown == 0:
        stats.warnings.append("empty solve domain; returning the stitch unchanged")
        return ErpImage(d_nn.data.copy(), d_nn.mask.copy()), stats

    ids = np.full((h, w), -1, dtype=np.int64)
    ids[solve] = np.arange(n_unknown)

    rows_idx: list[np.ndarray] = []
    cols_idx: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    b = np.zeros(n_unknown)

    for axis in (1, 0):
        g_acc, w_acc = _edge_targets(erp_maps, frustum_weights, axis)
        nxt_ids = np.roll(ids, -1, axis=axis)
        edge = (w_acc > 0.0) & (ids >= 0) & (nxt_ids >= 0)
        if axis == 0:
            edge[-1, :] = False
        p = ids[edge]
        q = nxt_ids[edge]
        we = w_acc[edge]
        ghat = g_acc[edge] / we
        # energy w * (B[q] - B[p] - ghat)^2
        rows_idx += [p, q, p, q]
        cols_idx += [p, q, q, p]
        vals += [we, we, -we, -we]
        np.subtract.at(b, p, we * ghat)
        np.add.at(b, q, we * ghat)

    lam = config.lambda_fidelity
    diag = np.arange(n_unknown)
    rows_idx.append(diag)
    cols_idx.append(diag)
    vals.append(np.full(n_unknown, lam))
    b += lam * d_nn.data[solve]

    a_mat = scipy.sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows_idx), np.concatenate(cols_idx))),
        shape=(n_unknown, n_unknown),
    ).tocsr()

    count = {"n": 0}

    def cb(_xk):
        count["n"] += 1

    x, info = scipy.sparse.linalg.cg(
        a_mat,
        b,
        x0=d_nn.data[solve],
        rtol=config.solver_tolerance,
        atol=0.0,
        maxiter=config.solver_max_iterations,
        callback=cb,
    )
    stats.iterations = count["n"]
    if info != 0:
        stats.converged = False
        stats.warnings.append(
            f"solver stopped after {count['n']} iterations without reaching tolerance"
        )

    out = d_nn.data.copy()
    out[solve] = x
    return ErpImage(out, d_nn.mask.copy()), stats
