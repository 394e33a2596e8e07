"""Global multi-scale deformable alignment of spherical disparity maps.

Each tangent map carries an m x n lattice of (scale, offset) pairs that are
bilinearly interpolated across the padded image; the rescaled value at a pixel
is ``s(x) * D(x) + o(x)``.  All 20 lattices are optimised jointly so that maps
agree on sampled overlap pixels, with a smoothness penalty between neighbouring
lattice points and a 1/s barrier that keeps scales away from zero.  The solve
runs coarse-to-fine over a schedule of lattice sizes, applying the recovered
deformations between stages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .disparity import SPHERICAL, DisparityMap, standardize
from .errors import DegenerateInputError, ParameterError, SemanticsError
from .geometry import HALF_PI, IcosahedronLayout, erp_lat_grid, erp_lon_grid
from .resampling import TangentImage, sample_bilinear


@dataclass(frozen=True)
class AlignmentConfig:
    lambda_smoothness: float = 40.0
    lambda_scale: float = 0.007
    sample_fraction: float = 0.01
    iterations_per_scale: int = 50
    grid_schedule: tuple[tuple[int, int], ...] = ((4, 3), (8, 7), (16, 14))
    pole_exclusion_deg: float = 0.0
    rng_seed: int = 0
    erp_width: int = 2048
    erp_height: int = 1024
    min_scale: float = 1e-6
    grad_tol: float = 1e-10
    lbfgs_memory: int = 10

    def __post_init__(self):
        if not (0.0 < self.sample_fraction <= 1.0):
            raise ParameterError("sample_fraction must be in (0, 1]")
        if self.rng_seed < 0:
            raise ParameterError("rng_seed must be non-negative")
        for m, n in self.grid_schedule:
            if m < 2 or n < 2:
                raise ParameterError("grid dimensions must be at least 2x2")
        sizes = [m * n for m, n in self.grid_schedule]
        if any(b < a for a, b in zip(sizes, sizes[1:])):
            raise ParameterError("grid schedule must be non-decreasing in size")


@dataclass(frozen=True)
class DeformationGrid:
    """Per-face lattice of scales and offsets; (cols, rows) = (m, n)."""

    face_index: int
    cols: int
    rows: int
    scales: np.ndarray  # (rows, cols)
    offsets: np.ndarray  # (rows, cols)

    def __post_init__(self):
        scales = np.asarray(self.scales, dtype=float)
        offsets = np.asarray(self.offsets, dtype=float)
        if scales.shape != (self.rows, self.cols) or offsets.shape != (self.rows, self.cols):
            raise ParameterError("grid arrays must have shape (rows, cols)")
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "offsets", offsets)

    @classmethod
    def identity(cls, face_index: int, cols: int, rows: int) -> "DeformationGrid":
        return cls(face_index, cols, rows, np.ones((rows, cols)), np.zeros((rows, cols)))

    def interpolate(self, tx, ty):
        """Bilinear (scale, offset) at normalized image coords in [0, 1]^2.

        Uses the difference form, which is exact for constant lattices (an
        identity grid reproduces the input bit-for-bit).
        """
        i0, j0, fx, fy = _cell_coords(tx, ty, self.cols, self.rows)

        def interp(a):
            v00 = a[j0, i0]
            v10 = a[j0, i0 + 1]
            v01 = a[j0 + 1, i0]
            v11 = a[j0 + 1, i0 + 1]
            return v00 + fx * (v10 - v00) + fy * (v01 - v00) + fx * fy * (v11 - v10 - v01 + v00)

        return interp(self.scales), interp(self.offsets)


def _cell_coords(tx, ty, cols: int, rows: int):
    """Grid cell indices and fractional offsets for normalized coords."""
    gx = np.clip(np.asarray(tx, dtype=float), 0.0, 1.0) * (cols - 1)
    gy = np.clip(np.asarray(ty, dtype=float), 0.0, 1.0) * (rows - 1)
    i0 = np.minimum(gx.astype(np.int64), cols - 2)
    j0 = np.minimum(gy.astype(np.int64), rows - 2)
    return i0, j0, gx - i0, gy - j0


def apply_deformation(d: DisparityMap, grid: DeformationGrid) -> DisparityMap:
    """Rescale a tangent-space disparity map by its deformation lattice."""
    if not isinstance(d.image, TangentImage):
        raise SemanticsError("deformation applies to tangent-space maps")
    if d.image.camera.face_index != grid.face_index:
        raise SemanticsError(
            f"grid is for face {grid.face_index}, map is face {d.image.camera.face_index}"
        )
    cam = d.image.camera
    tx = (np.arange(cam.width_px) + 0.5) / cam.width_px
    ty = (np.arange(cam.height_px) + 0.5) / cam.height_px
    s, o = grid.interpolate(tx[None, :], ty[:, None])
    image = TangentImage(cam, s * d.data + o, d.mask)
    return replace(d, image=image)


@dataclass(frozen=True)
class OverlapSet:
    """Sampled ERP pixels where two padded footprints overlap.

    Plane coordinates are the samples' gnomonic coordinates in each camera;
    the normalized coordinates (cached from the camera rectangles) drive the
    lattice interpolation.
    """

    face_a: int
    face_b: int
    lon: np.ndarray
    lat: np.ndarray
    values_a: np.ndarray
    values_b: np.ndarray
    plane_xa: np.ndarray
    plane_ya: np.ndarray
    plane_xb: np.ndarray
    plane_yb: np.ndarray
    norm_xa: np.ndarray
    norm_ya: np.ndarray
    norm_xb: np.ndarray
    norm_yb: np.ndarray

    def __post_init__(self):
        if not self.face_a < self.face_b:
            raise ParameterError("overlap pair must satisfy a < b")

    @property
    def size(self) -> int:
        return self.lon.size


def _sample_map(d: DisparityMap, lon, lat):
    cam = d.image.camera
    x, y, _ = cam.plane_from_direction(lon, lat)
    u, v = cam.plane_to_pixel(x, y)
    vals, ok = sample_bilinear(d.data, d.mask, u, v, wrap_u=False)
    return vals, ok, x, y


def build_overlap_sets(
    maps: list[DisparityMap],
    layout: IcosahedronLayout,
    config: AlignmentConfig,
    stage_index: int = 0,
) -> list[OverlapSet]:
    """Enumerate pairwise footprint overlaps on the ERP grid and draw a seeded
    uniform sample of ceil(fraction * |overlap|) pixels per pair."""
    if len(maps) != len(layout.cameras):
        raise ParameterError("need one map per camera")
    for i, d in enumerate(maps):
        if d.semantics != SPHERICAL:
            raise SemanticsError(f"map {i} is not spherical disparity")

    w, h = config.erp_width, config.erp_height
    lon = erp_lon_grid(w)
    lat = erp_lat_grid(h)
    pole_rad = math.radians(config.pole_exclusion_deg)
    row_ok = np.abs(lat) <= HALF_PI - pole_rad

    inside = []
    row_ranges = []
    for cam in layout.cameras:
        x, y, valid = cam.plane_grid_from_lonlat(lon, lat)
        m = valid & cam.contains_plane(x, y)
        inside.append(m)
        rows = np.flatnonzero(m.any(axis=1))
        row_ranges.append((int(rows[0]), int(rows[-1]) + 1) if rows.size else (0, 0))

    overlaps = []
    n = len(layout.cameras)
    for a in range(n):
        for b in range(a + 1, n):
            r0 = max(row_ranges[a][0], row_ranges[b][0])
            r1 = min(row_ranges[a][1], row_ranges[b][1])
            if r0 >= r1:
                continue
            both = inside[a][r0:r1] & inside[b][r0:r1] & row_ok[r0:r1, None]
            flat = np.flatnonzero(both)
            if flat.size == 0:
                continue
            k = math.ceil(config.sample_fraction * flat.size)
            rng = np.random.Generator(
                np.random.PCG64(np.random.SeedSequence([config.rng_seed, stage_index, a, b]))
            )
            pick = np.sort(rng.choice(flat.size, size=k, replace=False))
            rows, cols = np.divmod(flat[pick], w)
            s_lon = lon[cols]
            s_lat = lat[rows + r0]

            va, ok_a, xa, ya = _sample_map(maps[a], s_lon, s_lat)
            vb, ok_b, xb, yb = _sample_map(maps[b], s_lon, s_lat)
            keep = ok_a & ok_b
            if not keep.any():
                continue
            cam_a, cam_b = layout.cameras[a], layout.cameras[b]
            txa, tya = cam_a.normalized_image_coords(xa[keep], ya[keep])
            txb, tyb = cam_b.normalized_image_coords(xb[keep], yb[keep])
            overlaps.append(
                OverlapSet(
                    face_a=a,
                    face_b=b,
                    lon=s_lon[keep],
                    lat=s_lat[keep],
                    values_a=va[keep],
                    values_b=vb[keep],
                    plane_xa=xa[keep],
                    plane_ya=ya[keep],
                    plane_xb=xb[keep],
                    plane_yb=yb[keep],
                    norm_xa=txa,
                    norm_ya=tya,
                    norm_xb=txb,
                    norm_yb=tyb,
                )
            )
    return overlaps


# -- energy ------------------------------------------------------------------


class _StageProblem:
    """Flattened energy/gradient evaluation for one lattice size.

    Variable vector layout: the first 20*m*n entries are scales (face-major,
    row-major within a face), the rest are offsets.
    """

    def __init__(self, overlaps: list[OverlapSet], cols: int, rows: int, config: AlignmentConfig):
        self.cols, self.rows = cols, rows
        self.config = config
        self.n_faces = 20
        self.per_face = cols * rows
        self.n_vars = self.n_faces * self.per_face

        idx_a, wts_a, idx_b, wts_b, vals_a, vals_b = [], [], [], [], [], []
        for ov in overlaps:
            ia, wa = self._bilinear_terms(ov.face_a, ov.norm_xa, ov.norm_ya)
            ib, wb = self._bilinear_terms(ov.face_b, ov.norm_xb, ov.norm_yb)
            idx_a.append(ia)
            wts_a.append(wa)
            idx_b.append(ib)
            wts_b.append(wb)
            vals_a.append(ov.values_a)
            vals_b.append(ov.values_b)
        if overlaps:
            self.idx_a = np.concatenate(idx_a)
            self.wts_a = np.concatenate(wts_a)
            self.idx_b = np.concatenate(idx_b)
            self.wts_b = np.concatenate(wts_b)
            self.vals_a = np.concatenate(vals_a)
            self.vals_b = np.concatenate(vals_b)
        else:
            self.idx_a = np.zeros((0, 4), dtype=np.int64)
            self.wts_a = np.zeros((0, 4))
            self.idx_b = self.idx_a
            self.wts_b = self.wts_a
            self.vals_a = np.zeros(0)
            self.vals_b = np.zeros(0)
        self.n_samples = self.vals_a.size

        # 4-connected lattice edges, each unordered pair once, all faces
        e1, e2 = [], []
        jj, ii = np.mgrid[0:rows, 0:cols]
        flat = (jj * cols + ii).ravel()
        horiz = (jj * cols + ii)[:, :-1].ravel()
        vert = (jj * cols + ii)[:-1, :].ravel()
        for f in range(self.n_faces):
            base = f * self.per_face
            e1.append(base + horiz)
            e2.append(base + horiz + 1)
            e1.append(base + vert)
            e2.append(base + vert + cols)
        self.edge1 = np.concatenate(e1)
        self.edge2 = np.concatenate(e2)
        self.z_s = self.n_faces * self.per_face
        del flat

    def _bilinear_terms(self, face: int, tx, ty):
        i0, j0, fx, fy = _cell_coords(tx, ty, self.cols, self.rows)
        base = face * self.per_face + j0 * self.cols + i0
        idx = np.stack([base, base + 1, base + self.cols, base + self.cols + 1], axis=1)
        wts = np.stack(
            [(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy], axis=1
        )
        return idx, wts

    def pack(self, grids: list[DeformationGrid]) -> np.ndarray:
        s = np.concatenate([g.scales.ravel() for g in grids])
        o = np.concatenate([g.offsets.ravel() for g in grids])
        return np.concatenate([s, o])

    def unpack(self, x: np.ndarray, grids: list[DeformationGrid]) -> list[DeformationGrid]:
        out = []
        for f, g in enumerate(grids):
            lo = f * self.per_face
            hi = lo + self.per_face
            out.append(
                DeformationGrid(
                    g.face_index,
                    self.cols,
                    self.rows,
                    x[lo:hi].reshape(self.rows, self.cols).copy(),
                    x[self.n_vars + lo : self.n_vars + hi].reshape(self.rows, self.cols).copy(),
                )
            )
        return out

    def components(self, x: np.ndarray):
        s = x[: self.n_vars]
        o = x[self.n_vars :]
        if s.min() <= 0.0:
            raise ParameterError("all deformation scales must be strictly positive")
        if self.n_samples:
            sa = (self.wts_a * s[self.idx_a]).sum(axis=1)
            oa = (self.wts_a * o[self.idx_a]).sum(axis=1)
            sb = (self.wts_b * s[self.idx_b]).sum(axis=1)
            ob = (self.wts_b * o[self.idx_b]).sum(axis=1)
            r = (sa * self.vals_a + oa) - (sb * self.vals_b + ob)
            e_align = float(r @ r) / self.n_samples
        else:
            r = np.zeros(0)
            e_align = 0.0
        ds = s[self.edge1] - s[self.edge2]
        do = o[self.edge1] - o[self.edge2]
        e_smooth = (float(ds @ ds) + float(do @ do)) / self.z_s
        e_scale = float((1.0 / s).sum())
        return e_align, e_smooth, e_scale, r

    def energy(self, x: np.ndarray):
        e_align, e_smooth, e_scale, _ = self.components(x)
        total = (
            e_align
            + self.config.lambda_smoothness * e_smooth
            + self.config.lambda_scale * e_scale
        )
        return total, e_align, e_smooth, e_scale

    def value(self, x: np.ndarray) -> float:
        return self.energy(x)[0]

    def value_and_grad(self, x: np.ndarray):
        s = x[: self.n_vars]
        o = x[self.n_vars :]
        e_align, e_smooth, e_scale, r = self.components(x)
        g_s = np.zeros(self.n_vars)
        g_o = np.zeros(self.n_vars)
        if self.n_samples:
            coef = (2.0 / self.n_samples) * r
            size = self.n_vars
            g_s += np.bincount(
                self.idx_a.ravel(),
                ((coef * self.vals_a)[:, None] * self.wts_a).ravel(),
                minlength=size,
            )
            g_o += np.bincount(
                self.idx_a.ravel(), (coef[:, None] * self.wts_a).ravel(), minlength=size
            )
            g_s -= np.bincount(
                self.idx_b.ravel(),
                ((coef * self.vals_b)[:, None] * self.wts_b).ravel(),
                minlength=size,
            )
            g_o -= np.bincount(
                self.idx_b.ravel(), (coef[:, None] * self.wts_b).ravel(), minlength=size
            )
        lam_s = self.config.lambda_smoothness
        ds = s[self.edge1] - s[self.edge2]
        do = o[self.edge1] - o[self.edge2]
        w = 2.0 * lam_s / self.z_s
        g_s += np.bincount(self.edge1, w * ds, minlength=self.n_vars)
        g_s -= np.bincount(self.edge2, w * ds, minlength=self.n_vars)
        g_o += np.bincount(self.edge1, w * do, minlength=self.n_vars)
        g_o -= np.bincount(self.edge2, w * do, minlength=self.n_vars)
        g_s -= self.config.lambda_scale / (s * s)
        total = e_align + lam_s * e_smooth + self.config.lambda_scale * e_scale
        return total, np.concatenate([g_s, g_o])


def _check_grids(grids: list[DeformationGrid]) -> tuple[int, int]:
    if len(grids) != 20:
        raise ParameterError("expected 20 deformation grids")
    cols, rows = grids[0].cols, grids[0].rows
    for g in grids:
        if (g.cols, g.rows) != (cols, rows):
            raise ParameterError("all grids must share one lattice size")
    return cols, rows


def energy(grids: list[DeformationGrid], overlaps: list[OverlapSet], config: AlignmentConfig):
    """Total energy and its raw components ``(total, align, smooth, scale)``."""
    cols, rows = _check_grids(grids)
    prob = _StageProblem(overlaps, cols, rows, config)
    return prob.energy(prob.pack(grids))


def energy_gradient(
    grids: list[DeformationGrid], overlaps: list[OverlapSet], config: AlignmentConfig
):
    """Analytic gradient of the total energy w.r.t. every (scale, offset).

    Returns ``(d_scales, d_offsets)``, each of shape (20, rows, cols).
    """
    cols, rows = _check_grids(grids)
    prob = _StageProblem(overlaps, cols, rows, config)
    _, g = prob.value_and_grad(prob.pack(grids))
    k = prob.n_vars
    return g[:k].reshape(20, rows, cols), g[k:].reshape(20, rows, cols)


# -- solver --------------------------------------------------------------------


@dataclass
class SolveStats:
    iterations: int = 0
    energy_initial: float = 0.0
    energy_final: float = 0.0
    grad_norm_final: float = 0.0
    line_search_failed: bool = False
    warnings: list[str] = field(default_factory=list)


def _lbfgs(x0, value_and_grad, value, *, iterations, memory, is_feasible, store_pair, grad_tol):
    """Limited-memory quasi-Newton descent with Armijo backtracking.

    The line search rejects infeasible trial points; pairs rejected by
    ``store_pair`` are kept out of the curvature model.  Accepted energies are
    non-increasing by construction.  Returns (x, stats).
    """
    x = np.asarray(x0, dtype=float).copy()
    with np.errstate(over="ignore", invalid="ignore"):
        f, g = value_and_grad(x)
    stats = SolveStats(energy_initial=f, energy_final=f, grad_norm_final=float(np.linalg.norm(g)))
    if not np.isfinite(f) or not np.isfinite(g).all():
        stats.line_search_failed = True
        stats.warnings.append("initial energy or gradient is not finite; nothing to optimise")
        return x, stats
    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    rho_hist: list[float] = []

    for k in range(iterations):
        gnorm = float(np.linalg.norm(g))
        stats.grad_norm_final = gnorm
        if gnorm < grad_tol:
            break

        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
            a = rho * (s @ q)
            alphas.append(a)
            q -= a * y
        if y_hist:
            q *= (s_hist[-1] @ y_hist[-1]) / (y_hist[-1] @ y_hist[-1])
        for (s, y, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
            q += (a - rho * (y @ q)) * s
        d = -q

        gtd = float(g @ d)
        if not np.isfinite(gtd) or gtd >= 0.0:
            s_hist.clear()
            y_hist.clear()
            rho_hist.clear()
            d = -g
            gtd = -(gnorm * gnorm)

        t = min(1.0, 1.0 / max(float(np.abs(g).sum()), 1e-32)) if k == 0 else 1.0
        accepted = False
        f_new = f
        for _ in range(60):
            x_new = x + t * d
            if is_feasible(x_new):
                f_new = value(x_new)
                if np.isfinite(f_new) and f_new <= f + 1e-4 * t * gtd:
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            stats.line_search_failed = True
            stats.warnings.append(f"line search failed at iteration {k}; returning best point")
            break

        f_new, g_new = value_and_grad(x_new)
        step = x_new - x
        yk = g_new - g
        ys = float(yk @ step)
        if store_pair(step, yk) and ys > 1e-12 * float(np.linalg.norm(yk)) * float(
            np.linalg.norm(step)
        ):
            s_hist.append(step)
            y_hist.append(yk)
            rho_hist.append(1.0 / ys)
            if len(s_hist) > memory:
                s_hist.pop(0)
                y_hist.pop(0)
                rho_hist.pop(0)
        x, f, g = x_new, f_new, g_new
        stats.iterations = k + 1
        stats.energy_final = f
        stats.grad_norm_final = float(np.linalg.norm(g))

    stats.energy_final = f
    return x, stats


def optimize_scale(
    grids: list[DeformationGrid],
    overlaps: list[OverlapSet],
    config: AlignmentConfig,
) -> tuple[list[DeformationGrid], SolveStats]:
    """Run the quasi-Newton solve for one lattice size.

    The curvature model skips steps that are (near-)uniform translations of
    all scales: that direction only probes the non-coercive 1/s pull, and
    amplifying it would let the scales drift without improving alignment.
    """
    cols, rows = _check_grids(grids)
    prob = _StageProblem(overlaps, cols, rows, config)
    x0 = prob.pack(grids)
    if prob.n_samples == 0:
        return [replace(g) for g in grids], SolveStats(warnings=["no overlap samples"])
    if config.iterations_per_scale <= 0:
        return [replace(g) for g in grids], SolveStats()

    n_scale = prob.n_vars
    sqrt_n = math.sqrt(n_scale)

    def is_feasible(x):
        return bool(x[:n_scale].min() > config.min_scale)

    def store_pair(step, _y):
        norm = float(np.linalg.norm(step))
        if norm == 0.0:
            return False
        uniform = abs(float(step[:n_scale].sum())) / sqrt_n
        return uniform < 0.999 * norm

    x, stats = _lbfgs(
        x0,
        prob.value_and_grad,
        prob.value,
        iterations=config.iterations_per_scale,
        memory=config.lbfgs_memory,
        is_feasible=is_feasible,
        store_pair=store_pair,
        grad_tol=config.grad_tol,
    )
    return prob.unpack(x, grids), stats


def _joint_gauge_renormalize(maps: list[DisparityMap]) -> list[DisparityMap]:
    """Remove the global affine gauge: one shared shift/scale applied to all
    maps, restoring pooled median 0 and pooled mean absolute deviation 1.

    Applying the same affine transform to every map cannot change their
    pairwise agreement; this only undoes the collective drift the 1/s term
    induces (the energy rewards uniformly growing all scales and offsets, see
    the module notes on non-coercivity).
    """
    pooled = np.concatenate([m.data[m.mask] for m in maps])
    k = (pooled.size - 1) // 2
    med = float(np.partition(pooled, k)[k])
    mad = float(np.abs(pooled - med).mean())
    if mad < 1e-12:
        return maps
    out = []
    for m in maps:
        image = TangentImage(m.image.camera, (m.data - med) / mad, m.mask)
        out.append(replace(m, image=image))
    return out


def align_multiscale(
    maps: list[DisparityMap],
    layout: IcosahedronLayout,
    config: AlignmentConfig,
) -> tuple[list[DisparityMap], list[list[DeformationGrid]], list[SolveStats]]:
    """Standardize once, then alternate overlap sampling, lattice optimisation
    and deformation application over the coarse-to-fine schedule.

    Maps are never re-standardized per face between stages; after each stage
    the whole stack gets one joint affine gauge renormalization, which leaves
    relative alignment untouched.  An empty schedule returns the standardized
    maps (the no-alignment mode).
    """
    current = []
    for i, d in enumerate(maps):
        try:
            current.append(standardize(d))
        except (DegenerateInputError, ParameterError) as exc:
            raise DegenerateInputError(f"face {i}: {exc}") from exc

    grids_per_stage: list[list[DeformationGrid]] = []
    stats_per_stage: list[SolveStats] = []
    for stage, (cols, rows) in enumerate(config.grid_schedule):
        overlaps = build_overlap_sets(current, layout, config, stage_index=stage)
        grids0 = [DeformationGrid.identity(i, cols, rows) for i in range(len(current))]
        grids, stats = optimize_scale(grids0, overlaps, config)
        current = [apply_deformation(d, g) for d, g in zip(current, grids)]
        current = _joint_gauge_renormalize(current)
        grids_per_stage.append(grids)
        stats_per_stage.append(stats)
    return current, grids_per_stage, stats_per_stage


def overlap_rms(maps: list[DisparityMap], layout: IcosahedronLayout, config: AlignmentConfig) -> float:
    """Root-mean-square pairwise disagreement over freshly sampled overlaps."""
    overlaps = build_overlap_sets(maps, layout, config)
    sq, n = 0.0, 0
    for ov in overlaps:
        d = ov.values_a - ov.values_b
        sq += float(d @ d)
        n += d.size
    if n == 0:
        raise ParameterError("no overlap samples")
    return math.sqrt(sq / n)
