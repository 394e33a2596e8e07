"""Command-line interface.

Subcommands cover each pipeline phase (layout, project, estimate-check,
align, blend) plus end-to-end runs (pipeline, synth, eval, ablate).
"""

from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

import click
import numpy as np

from .alignment import align_multiscale
from .disparity import convert_to_spherical
from .errors import ParameterError, ProviderError
from .evaluation import evaluate_pipeline
from .geometry import build_icosahedron_layout
from .pipeline import (
    BLEND_MODES,
    PipelineConfig,
    blend_maps,
    check_provider,
    config_from_dict,
    config_to_dict,
    grids_to_json_dict,
    load_config,
    load_layout_json,
    load_provider,
    pole_cap_mask,
    provider_filename,
    read_erp_pfm,
    rerun_blend,
    run_pipeline,
    write_erp_pfm,
    write_layout_json,
    write_synthetic_provider,
)
from .resampling import ErpImage, erp_to_tangent, tangent_to_erp


def _build_config(config_path, **overrides) -> PipelineConfig:
    cfg = load_config(config_path) if config_path else PipelineConfig()
    fields = {k: v for k, v in overrides.items() if v is not None}
    if not fields:
        return cfg
    d = config_to_dict(cfg)
    for k, v in fields.items():
        d[k] = v
    return config_from_dict(d)


@click.group()
def main():
    """Stitch per-view disparity estimates into a spherical disparity map."""


@main.command()
@click.option("--padding", default=0.3, show_default=True)
@click.option("--tangent-width", default=400, show_default=True)
@click.option("--tangent-height", default=346, show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None)
def layout(padding, tangent_width, tangent_height, output):
    """Emit the 20-camera layout as JSON (with its hash)."""
    lay = build_icosahedron_layout(padding, tangent_width, tangent_height)
    d = lay.to_json_dict()
    if output:
        write_layout_json(output, lay)
        click.echo(f"wrote {output} (hash {d['layout_hash'][:12]})")
    else:
        click.echo(json.dumps(d, indent=2, sort_keys=True))


@main.command()
@click.option("--erp", "erp_path", required=True, type=click.Path(exists=True))
@click.option("--layout", "layout_path", type=click.Path(exists=True), default=None)
@click.option("--padding", default=0.3, show_default=True)
@click.option("--tangent-width", default=400, show_default=True)
@click.option("--tangent-height", default=346, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--format", "fmt", type=click.Choice(["png", "pfm"]), default="png")
def project(erp_path, layout_path, padding, tangent_width, tangent_height, out_dir, fmt):
    """Project an ERP image to the 20 tangent images."""
    import imageio.v3 as iio

    if layout_path:
        lay = load_layout_json(layout_path)
    else:
        lay = build_icosahedron_layout(padding, tangent_width, tangent_height)
    if erp_path.lower().endswith(".pfm"):
        erp = read_erp_pfm(erp_path)
    else:
        raw = np.asarray(iio.imread(erp_path)).astype(np.float64)
        peak = 65535.0 if raw.max() > 255 else 255.0
        erp = ErpImage.from_data(raw / peak)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_layout_json(out / "layout.json", lay)
    for cam in lay.cameras:
        tan = erp_to_tangent(erp, cam)
        if fmt == "png":
            img = (np.clip(tan.data, 0.0, 1.0) * 255).round().astype(np.uint8)
            iio.imwrite(out / f"tangent_{cam.face_index:02d}.png", img)
        else:
            from .pfm import write_pfm

            write_pfm(out / f"tangent_{cam.face_index:02d}.pfm", tan.data.astype(np.float32))
    click.echo(f"wrote 20 tangent images to {out}")


@main.command("estimate-check")
@click.option("--provider", "provider_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--layout", "layout_path", type=click.Path(exists=True), default=None)
@click.option("--padding", default=0.3, show_default=True)
@click.option("--tangent-width", default=400, show_default=True)
@click.option("--tangent-height", default=346, show_default=True)
def estimate_check(provider_dir, layout_path, padding, tangent_width, tangent_height):
    """Validate a provider directory against the camera-layout contract."""
    if layout_path:
        lay = load_layout_json(layout_path)
    else:
        lay = build_icosahedron_layout(padding, tangent_width, tangent_height)
    violations = check_provider(provider_dir, lay)
    if violations:
        for v in violations:
            click.echo(f"VIOLATION: {v}")
        sys.exit(1)
    click.echo("provider ok: 20 maps match the layout contract")


def _pipeline_options(fn):
    opts = [
        click.option("--config", "config_path", type=click.Path(exists=True), default=None),
        click.option("--provider", type=click.Choice(["synthetic", "files"]), default=None),
        click.option("--provider-dir", type=click.Path(file_okay=False), default=None),
        click.option("--gt", "gt_depth_path", type=click.Path(exists=True), default=None),
        click.option("--erp-width", type=int, default=None),
        click.option("--erp-height", type=int, default=None),
        click.option("--seed", "rng_seed", type=int, default=None),
        click.option("--blend-scheme", type=click.Choice(list(BLEND_MODES)), default=None),
        click.option("--matterport", "matterport_mode", is_flag=True, default=None),
        click.option("--dump-aligned", is_flag=True, default=None),
        click.option("--dump-weights", is_flag=True, default=None),
    ]
    for o in reversed(opts):
        fn = o(fn)
    return fn


@main.command()
@_pipeline_options
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def pipeline(config_path, out_dir, **overrides):
    """Run the full pipeline and write all artifacts."""
    cfg = _build_config(config_path, **overrides)
    try:
        result = run_pipeline(cfg, out_dir=out_dir)
    except (ParameterError, ProviderError) as exc:
        raise click.ClickException(str(exc))
    click.echo(f"wrote {Path(out_dir) / 'final_disparity.pfm'}")
    for stage, stats in enumerate(result.align_stats):
        click.echo(
            f"alignment stage {stage}: {stats.iterations} iterations, "
            f"energy {stats.energy_initial:.4f} -> {stats.energy_final:.4f}"
        )
    if result.blend_stats is not None and not result.blend_stats.converged:
        click.echo("warning: blending solver did not reach tolerance", err=True)
    if result.metrics is not None:
        click.echo(json.dumps(result.metrics.as_dict(), indent=2))


@main.command()
@_pipeline_options
@click.option("--scene", "scene_kind", type=click.Choice(["box", "sphere_in_box"]), default=None)
@click.option("--no-corrupt", is_flag=True, default=False)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def synth(config_path, out_dir, scene_kind, no_corrupt, **overrides):
    """Render the synthetic scene into a provider directory plus ground truth."""
    cfg = _build_config(config_path, **overrides)
    if scene_kind:
        cfg = dataclasses.replace(cfg, scene=dataclasses.replace(cfg.scene, kind=scene_kind))
    if no_corrupt:
        scene = dataclasses.replace(
            cfg.scene,
            corruption_scale_range=(1.0, 1.0),
            corruption_offset_range=(0.0, 0.0),
            smooth_field_amplitude=0.0,
        )
        cfg = dataclasses.replace(cfg, scene=scene)
    paths = write_synthetic_provider(cfg, out_dir)
    click.echo(f"wrote synthetic provider to {paths['provider']}")


@main.command()
@_pipeline_options
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def align(config_path, out_dir, **overrides):
    """Convert provider disparity to spherical, align it, dump aligned maps."""
    cfg = _build_config(config_path, **overrides)
    cfg = dataclasses.replace(cfg, dump_aligned=True)
    layout = build_icosahedron_layout(cfg.padding, cfg.tangent_width, cfg.tangent_height)
    if cfg.provider == "synthetic":
        from .synthetic import generate_synthetic

        data = generate_synthetic(cfg.effective_scene(), layout, cfg.erp_width, cfg.erp_height)
        perspective = data.perspective_maps
    else:
        perspective = load_provider(cfg.provider_dir, layout)
    spherical = [convert_to_spherical(m, cam) for m, cam in zip(perspective, layout.cameras)]
    aligned, grids, stats = align_multiscale(spherical, layout, cfg.effective_alignment())

    out = Path(out_dir)
    (out / "aligned").mkdir(parents=True, exist_ok=True)
    (out / "grids").mkdir(exist_ok=True)
    write_layout_json(out / "layout.json", layout)
    for m in aligned:
        erp = tangent_to_erp(m.image, cfg.erp_width, cfg.erp_height)
        write_erp_pfm(out / "aligned" / provider_filename(m.image.camera.face_index), erp)
    for stage, g in enumerate(grids):
        (out / "grids" / f"stage_{stage}.json").write_text(
            json.dumps(grids_to_json_dict(stage, g), indent=1) + "\n"
        )
    for stage, st in enumerate(stats):
        click.echo(
            f"stage {stage}: {st.iterations} iterations, energy "
            f"{st.energy_initial:.4f} -> {st.energy_final:.4f}"
        )
    click.echo(f"wrote aligned maps and grid checkpoints to {out}")


@main.command()
@click.option("--run-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--scheme", type=click.Choice(list(BLEND_MODES)), default=None)
def blend(run_dir, scheme):
    """Re-blend dumped aligned maps (bit-exact with the original run)."""
    try:
        _, out = rerun_blend(run_dir, scheme)
    except ParameterError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"wrote {out}")


@main.command("eval")
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True))
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True))
@click.option("--matterport", is_flag=True, default=False)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
def eval_cmd(pred_path, gt_path, matterport, out_dir):
    """Score a predicted disparity map against ground-truth depth."""
    from . import reports

    pred = read_erp_pfm(pred_path)
    gt = read_erp_pfm(gt_path)
    mask = None
    if matterport:
        mask = ~pole_cap_mask(pred.width, pred.height, 25.0)
    rep = evaluate_pipeline(pred, gt, mask)
    click.echo(json.dumps(rep.as_dict(), indent=2))
    if out_dir:
        reports.write_metrics(Path(out_dir), rep)
        click.echo(f"wrote metrics to {out_dir}")


ABLATION_ALIGNMENTS = {
    "no-align": (),
    "2x2": ((2, 2),),
    "4x3": ((4, 3),),
    "8x7": ((8, 7),),
    "16x14": ((16, 14),),
    "multi-scale": ((4, 3), (8, 7), (16, 14)),
}
ABLATION_BLENDS = ("nn", "mean", "frustum", "poisson")


def run_ablation(cfg: PipelineConfig, full: bool = False):
    """Alignment-mode x blend-mode study on the synthetic provider.

    Shares the projection/conversion work; every alignment variant is blended
    with poisson, and the multi-scale alignment with every blend mode.
    """
    from .synthetic import generate_synthetic

    layout = build_icosahedron_layout(cfg.padding, cfg.tangent_width, cfg.tangent_height)
    data = generate_synthetic(cfg.effective_scene(), layout, cfg.erp_width, cfg.erp_height)
    spherical = [
        convert_to_spherical(m, cam) for m, cam in zip(data.perspective_maps, layout.cameras)
    ]
    base_align = cfg.effective_alignment()

    rows = {}
    for name, schedule in ABLATION_ALIGNMENTS.items():
        align_cfg = dataclasses.replace(base_align, grid_schedule=schedule)
        aligned, _, _ = align_multiscale(spherical, layout, align_cfg)
        erp_maps = [
            tangent_to_erp(m.image, cfg.erp_width, cfg.erp_height) for m in aligned
        ]
        blends = ABLATION_BLENDS if (full or name == "multi-scale") else ("poisson",)
        for scheme in blends:
            final, _, _ = blend_maps(
                erp_maps, layout, scheme, cfg.erp_width, cfg.erp_height, cfg.blend
            )
            label = f"{name}+{scheme}"
            rows[label] = evaluate_pipeline(final, data.gt_depth)
    return rows


@main.command()
@_pipeline_options
@click.option("--full", is_flag=True, default=False, help="full alignment x blend cross product")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def ablate(config_path, out_dir, full, **overrides):
    """Reproduce the alignment/blending mode study on synthetic data."""
    from . import reports

    cfg = _build_config(config_path, **overrides)
    rows = run_ablation(cfg, full=full)
    tsv, fig = reports.write_ablation_report(Path(out_dir), rows)
    click.echo(reports.format_metric_table(rows))
    click.echo(f"wrote {tsv} and {fig}")


if __name__ == "__main__":
    main()
