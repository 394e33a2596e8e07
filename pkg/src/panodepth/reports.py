"""Report rendering: metric tables, visualisation PNGs and ablation figures.

Every report path writes a machine-readable delimited file (JSON/TSV)
alongside any rendered figure.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import MetricReport
from .resampling import ErpImage

METRIC_COLUMNS = ("AbsRel", "MAE", "RMSE", "RMSE-log", "d<1.25", "d<1.25^2", "d<1.25^3")


def metric_row(rep: MetricReport) -> list[float]:
    return [rep.abs_rel, rep.mae, rep.rmse, rep.rmse_log, rep.delta1, rep.delta2, rep.delta3]


def format_metric_table(rows: dict[str, MetricReport]) -> str:
    """Aligned plain-text table, one row per labelled report."""
    name_w = max(len("method"), *(len(n) for n in rows)) + 2
    header = "method".ljust(name_w) + "  ".join(c.rjust(9) for c in METRIC_COLUMNS)
    lines = [header]
    for name, rep in rows.items():
        cells = "  ".join(f"{v:9.4f}" for v in metric_row(rep))
        lines.append(name.ljust(name_w) + cells)
    return "\n".join(lines) + "\n"


def write_metrics(out_dir: Path, rep: MetricReport, name: str = "metrics") -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{name}.json").write_text(json.dumps(rep.as_dict(), indent=2) + "\n")
    (out_dir / f"{name}.txt").write_text(format_metric_table({"result": rep}))


def normalize_for_display(erp: ErpImage) -> np.ndarray:
    """Min-max normalise valid pixels into [0, 1]; invalid pixels become 0."""
    out = np.zeros(erp.mask.shape)
    if erp.mask.any():
        vals = erp.data[erp.mask]
        lo, hi = float(vals.min()), float(vals.max())
        span = hi - lo if hi > lo else 1.0
        out[erp.mask] = (erp.data[erp.mask] - lo) / span
    return out

def save_grayscale_png(path, field: np.ndarray) -> None:
    """Save a [0, 1] field as an 8-bit grayscale PNG."""
    import imageio.v3 as iio

    iio.imwrite(Path(path), (np.clip(field, 0.0, 1.0) * 255).round().astype(np.uint8))


def save_disparity_png(path, erp: ErpImage, cmap: str = "magma") -> None:
    """Colour-mapped visualisation of a disparity map (min-max normalised)."""
    plt.imsave(Path(path), normalize_for_display(erp), cmap=cmap, vmin=0.0, vmax=1.0)


def save_weight_fields(out_dir, fields) -> list[Path]:
    """Dump each face's blending weights as a grayscale PNG."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for f in fields:
        p = out_dir / f"{f.scheme}_{f.face_index:02d}.png"
        save_grayscale_png(p, f.weights)
        paths.append(p)
    return paths


def write_ablation_report(out_dir, rows: dict[str, MetricReport]) -> tuple[Path, Path]:
    """Delimited ablation table plus a rendered comparison figure.

    Returns (tsv_path, figure_path).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    tsv = out_dir / "ablation.tsv"
    with open(tsv, "w") as f:
        f.write("mode\t" + "\t".join(METRIC_COLUMNS) + "\n")
        for name, rep in rows.items():
            f.write(name + "\t" + "\t".join(f"{v:.6f}" for v in metric_row(rep)) + "\n")
    (out_dir / "ablation.txt").write_text(format_metric_table(rows))

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))
    names = list(rows)
    abs_rel = [rows[n].abs_rel for n in names]
    rmse = [rows[n].rmse for n in names]
    xs = np.arange(len(names))
    for ax, vals, title in ((ax1, abs_rel, "AbsRel"), (ax2, rmse, "RMSE")):
        ax.bar(xs, vals, color="#31688e")
        ax.set_xticks(xs)
        ax.set_xticklabels(names, rotation=35, ha="right", fontsize=8)
        ax.set_title(title)
        ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig_path = out_dir / "ablation.png"
    fig.savefig(fig_path, dpi=130)
    plt.close(fig)
    return tsv, fig_path
