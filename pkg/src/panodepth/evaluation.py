"""Affine disparity fitting and the seven standard depth metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, ParameterError
from .resampling import ErpImage

DELTA_THRESHOLDS = (1.25, 1.25**2, 1.25**3)


@dataclass(frozen=True)
class MetricReport:
    abs_rel: float
    mae: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float
    n_pixels: int
    n_negative_depth: int

    def as_dict(self) -> dict:
        return {
            "abs_rel": self.abs_rel,
            "mae": self.mae,
            "rmse": self.rmse,
            "rmse_log": self.rmse_log,
            "delta1": self.delta1,
            "delta2": self.delta2,
            "delta3": self.delta3,
            "n_pixels": self.n_pixels,
            "n_negative_depth": self.n_negative_depth,
        }


def _joint_mask(pred: ErpImage, gt: ErpImage, mask=None) -> np.ndarray:
    m = pred.mask & gt.mask
    if mask is not None:
        m = m & np.asarray(mask, dtype=bool)
    return m


def fit_affine_disparity(pred: ErpImage, gt_depth: ErpImage, mask=None) -> tuple[float, float]:
    """Closed-form least squares of ``s * pred + o`` against inverse depth."""
    m = _joint_mask(pred, gt_depth, mask) & (gt_depth.data > 0)
    p = pred.data[m]
    if p.size < 2:
        raise ParameterError("need at least 2 jointly valid pixels for the affine fit")
    t = 1.0 / gt_depth.data[m]
    n = p.size
    sp = p.sum()
    spp = float(p @ p)
    det = n * spp - sp * sp
    if det <= 1e-12 * max(n * spp, 1.0):
        raise DegenerateInputError("prediction is (near) constant; affine fit is rank deficient")
    st = t.sum()
    spt = float(p @ t)
    scale = (n * spt - sp * st) / det
    offset = (st - scale * sp) / n
    return float(scale), float(offset)


def compute_metrics(pred_depth: ErpImage, gt_depth: ErpImage, mask=None) -> MetricReport:
    """Depth-space error metrics.

    Non-positive predicted depths are counted, excluded from the log/ratio
    metrics, and kept in AbsRel/MAE/RMSE; non-finite predictions are excluded
    everywhere.
    """
    m = _joint_mask(pred_depth, gt_depth, mask)
    if not m.any():
        raise ParameterError("empty evaluation mask")
    z = pred_depth.data[m]
    zs = gt_depth.data[m]
    if (zs <= 0).any():
        raise ParameterError("ground-truth depth must be positive on the mask")

    finite = np.isfinite(z)
    n_negative = int(((z <= 0) | ~finite).sum())
    z, zs = z[finite], zs[finite]
    if z.size == 0:
        raise DegenerateInputError("no finite predicted depths to evaluate")

    err = np.abs(z - zs)
    abs_rel = float((err / zs).mean())
    mae = float(err.mean())
    rmse = float(np.sqrt((err**2).mean()))

    pos = z > 0
    if pos.any():
        zp, zsp = z[pos], zs[pos]
        dlog = np.log10(zp) - np.log10(zsp)
        rmse_log = float(np.sqrt((dlog**2).mean()))
        ratio = np.maximum(zp / zsp, zsp / zp)
        deltas = [float((ratio < tau).mean()) for tau in DELTA_THRESHOLDS]
    else:
        rmse_log = float("nan")
        deltas = [0.0, 0.0, 0.0]

    return MetricReport(
        abs_rel=abs_rel,
        mae=mae,
        rmse=rmse,
        rmse_log=rmse_log,
        delta1=deltas[0],
        delta2=deltas[1],
        delta3=deltas[2],
        n_pixels=int(z.size),
        n_negative_depth=n_negative,
    )


def evaluate_pipeline(pred_disparity: ErpImage, gt_depth: ErpImage, mask=None) -> MetricReport:
    """Fit disparity affinely to inverse ground truth, invert to depth, score."""
    scale, offset = fit_affine_disparity(pred_disparity, gt_depth, mask)
    fitted = scale * pred_disparity.data + offset
    with np.errstate(divide="ignore"):
        depth = np.where(fitted != 0.0, 1.0 / fitted, np.inf)
    pred_depth = ErpImage(depth, pred_disparity.mask)
    return compute_metrics(pred_depth, gt_depth, mask)
