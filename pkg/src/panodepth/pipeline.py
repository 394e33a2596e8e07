"""End-to-end orchestration: providers, configuration, artifacts.

The pipeline runs four phases: project/ingest per-face perspective disparity,
convert it to spherical disparity, align the 20 maps globally, and blend them
into one ERP disparity map.  Disparity providers are pluggable: either the
synthetic analytic scene or a directory of 20 PFM files plus a manifest that
echoes the camera-layout hash (any estimator that honours the layout works).
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .alignment import AlignmentConfig, DeformationGrid, SolveStats, align_multiscale
from .blending import (
    SCHEMES,
    BlendConfig,
    PoissonStats,
    blend_poisson,
    blend_weighted,
    compute_weights,
    stitch_nn,
)
from .disparity import PERSPECTIVE, DisparityMap, convert_to_spherical
from .errors import ParameterError, ProviderError
from .evaluation import MetricReport, evaluate_pipeline
from .geometry import (
    IcosahedronLayout,
    build_icosahedron_layout,
    erp_lat_grid,
    layout_from_json_dict,
)
from .pfm import read_float_map, write_pfm
from .resampling import ErpImage, TangentImage, tangent_to_erp
from .synthetic import SyntheticScene, generate_synthetic, render_erp_rgb

BLEND_MODES = SCHEMES + ("poisson",)
MATTERPORT_POLE_DEG = 25.0


@dataclass(frozen=True)
class PipelineConfig:
    erp_width: int = 2048
    erp_height: int = 1024
    padding: float = 0.3
    tangent_width: int = 400
    tangent_height: int = 346
    provider: str = "synthetic"
    provider_dir: str | None = None
    gt_depth_path: str | None = None
    blend_scheme: str = "poisson"
    matterport_mode: bool = False
    rng_seed: int = 0
    alignment: AlignmentConfig = field(default_factory=AlignmentConfig)
    blend: BlendConfig = field(default_factory=BlendConfig)
    scene: SyntheticScene = field(default_factory=SyntheticScene)
    dump_aligned: bool = False
    dump_weights: bool = False
    write_viz: bool = True

    def __post_init__(self):
        if self.erp_width != 2 * self.erp_height:
            raise ParameterError("ERP width must be twice the height")
        if self.provider not in ("synthetic", "files"):
            raise ParameterError(f"unknown provider {self.provider!r}")
        if self.blend_scheme not in BLEND_MODES:
            raise ParameterError(
                f"unknown blend scheme {self.blend_scheme!r}; expected one of {BLEND_MODES}"
            )

    def effective_alignment(self) -> AlignmentConfig:
        """Alignment config with the pipeline seed, grid size and pole mode applied."""
        pole = MATTERPORT_POLE_DEG if self.matterport_mode else self.alignment.pole_exclusion_deg
        return replace(
            self.alignment,
            erp_width=self.erp_width,
            erp_height=self.erp_height,
            rng_seed=self.rng_seed,
            pole_exclusion_deg=pole,
        )

    def effective_scene(self) -> SyntheticScene:
        return replace(self.scene, rng_seed=self.rng_seed)


def _dataclass_from_dict(cls, d: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ParameterError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = dict(d)
    for key in ("grid_schedule",):
        if key in kwargs:
            kwargs[key] = tuple(tuple(x) for x in kwargs[key])
    for key in ("room_half_extents", "sphere_center", "corruption_scale_range", "corruption_offset_range"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    return cls(**kwargs)


def config_from_dict(d: dict) -> PipelineConfig:
    d = dict(d)
    nested = {
        "alignment": AlignmentConfig,
        "blend": BlendConfig,
        "scene": SyntheticScene,
    }
    kwargs = {}
    for key, cls in nested.items():
        if key in d:
            kwargs[key] = _dataclass_from_dict(cls, d.pop(key))
    kwargs.update(d)
    return _dataclass_from_dict(PipelineConfig, kwargs)


def load_config(path) -> PipelineConfig:
    """Load a pipeline configuration from a TOML or JSON file."""
    p = Path(path)
    text = p.read_text()
    if p.suffix.lower() == ".json":
        return config_from_dict(json.loads(text))
    try:
        import tomllib  # py311+
    except ModuleNotFoundError:
        import tomli as tomllib
    return config_from_dict(tomllib.loads(text))


def config_to_dict(config: PipelineConfig) -> dict:
    d = dataclasses.asdict(config)
    d["alignment"]["grid_schedule"] = [list(x) for x in d["alignment"]["grid_schedule"]]
    return d


# -- provider interchange -------------------------------------------------------


def provider_filename(face: int) -> str:
    return f"disp_{face:02d}.pfm"


def write_layout_json(path, layout: IcosahedronLayout) -> dict:
    d = layout.to_json_dict()
    Path(path).write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")
    return d


def load_layout_json(path) -> IcosahedronLayout:
    return layout_from_json_dict(json.loads(Path(path).read_text()))


def write_provider_dir(
    out_dir,
    layout: IcosahedronLayout,
    maps: list[DisparityMap],
    model_id: str,
    model_version: str,
) -> Path:
    """Write 20 perspective-disparity PFMs plus the sidecar manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    faces = []
    for cam, d in zip(layout.cameras, maps):
        name = provider_filename(cam.face_index)
        data = np.where(d.mask, d.data, np.nan).astype(np.float32)
        write_pfm(out_dir / name, data)
        faces.append({"face": cam.face_index, "file": name})
    manifest = {
        "layout_hash": layout.to_json_dict()["layout_hash"],
        "model": {"id": model_id, "version": model_version},
        "tangent_resolution": [layout.cameras[0].width_px, layout.cameras[0].height_px],
        "faces": faces,
    }
    mpath = out_dir / "manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return mpath


def check_provider(provider_dir, layout: IcosahedronLayout) -> list[str]:
    """Validate a provider directory; returns a list of violations (empty = ok)."""
    provider_dir = Path(provider_dir)
    violations: list[str] = []
    mpath = provider_dir / "manifest.json"
    if not mpath.exists():
        return [f"missing manifest: {mpath}"]
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as exc:
        return [f"unreadable manifest: {exc}"]

    expected_hash = layout.to_json_dict()["layout_hash"]
    got = manifest.get("layout_hash")
    if got != expected_hash:
        violations.append(f"layout hash mismatch: manifest {got!r} vs layout {expected_hash!r}")

    cam0 = layout.cameras[0]
    res = manifest.get("tangent_resolution")
    if res != [cam0.width_px, cam0.height_px]:
        violations.append(
            f"tangent resolution mismatch: manifest {res} vs layout "
            f"{[cam0.width_px, cam0.height_px]}"
        )

    entries = {e.get("face"): e.get("file") for e in manifest.get("faces", [])}
    missing = sorted(set(range(20)) - set(entries))
    if missing:
        violations.append(f"manifest missing faces: {missing}")
    for face in sorted(set(entries)):
        fname = entries[face]
        fpath = provider_dir / fname
        if not fpath.exists():
            violations.append(f"face {face}: file missing: {fname}")
            continue
        try:
            data = read_float_map(fpath)
        except Exception as exc:
            violations.append(f"face {face}: unreadable ({exc})")
            continue
        if data.ndim != 2:
            violations.append(f"face {face}: expected single channel, got shape {data.shape}")
            continue
        if data.shape != (cam0.height_px, cam0.width_px):
            violations.append(
                f"face {face}: shape {data.shape} does not match layout "
                f"{(cam0.height_px, cam0.width_px)}"
            )
        # NaN marks masked pixels and is allowed; infinities are not
        if np.isinf(data).any():
            violations.append(f"face {face}: contains infinite values")
        if not np.isfinite(data).any():
            violations.append(f"face {face}: no valid pixels")
    return violations


def load_provider(provider_dir, layout: IcosahedronLayout) -> list[DisparityMap]:
    """Load 20 perspective disparity maps, enforcing the manifest handshake."""
    provider_dir = Path(provider_dir)
    mpath = provider_dir / "manifest.json"
    if not mpath.exists():
        raise ProviderError(f"provider manifest not found: {mpath}")
    manifest = json.loads(mpath.read_text())
    expected_hash = layout.to_json_dict()["layout_hash"]
    if manifest.get("layout_hash") != expected_hash:
        raise ProviderError(
            "provider was generated for a different camera layout "
            f"(hash {manifest.get('layout_hash')!r} != {expected_hash!r})"
        )
    entries = {e["face"]: e["file"] for e in manifest.get("faces", [])}
    missing = sorted(set(range(20)) - set(entries))
    files_missing = sorted(
        f for f in set(range(20)) - set(missing) if not (provider_dir / entries[f]).exists()
    )
    if missing or files_missing:
        raise ProviderError(
            f"provider incomplete: manifest missing faces {missing}, files missing for "
            f"{files_missing}"
        )
    maps = []
    for cam in layout.cameras:
        data = read_float_map(provider_dir / entries[cam.face_index]).astype(np.float64)
        if data.shape != (cam.height_px, cam.width_px):
            raise ProviderError(
                f"face {cam.face_index}: disparity shape {data.shape} does not match "
                f"layout {(cam.height_px, cam.width_px)}"
            )
        mask = np.isfinite(data)
        maps.append(
            DisparityMap(
                TangentImage(cam, np.where(mask, data, 0.0), mask), semantics=PERSPECTIVE
            )
        )
    return maps


# -- ERP float map I/O -----------------------------------------------------------


def write_erp_pfm(path, erp: ErpImage) -> None:
    write_pfm(path, np.where(erp.mask, erp.data, np.nan).astype(np.float32))


def read_erp_pfm(path) -> ErpImage:
    data = read_float_map(path).astype(np.float64)
    mask = np.isfinite(data)
    return ErpImage(np.where(mask, data, 0.0), mask)


# -- pipeline ----------------------------------------------------------------------


@dataclass
class PipelineResult:
    layout: IcosahedronLayout
    aligned_erp: list[ErpImage]
    d_nn: ErpImage
    final: ErpImage
    grids_per_stage: list[list[DeformationGrid]]
    align_stats: list[SolveStats]
    blend_stats: PoissonStats | None
    metrics: MetricReport | None
    gt_depth: ErpImage | None
    corruption: list[dict] | None


def _quantize_f32(erp: ErpImage) -> ErpImage:
    """Round data to float32 so in-memory blending matches blending of dumped
    float32 artifacts bit for bit."""
    return ErpImage(erp.data.astype(np.float32).astype(np.float64), erp.mask)


def pole_cap_mask(erp_width: int, erp_height: int, cap_deg: float) -> np.ndarray:
    lat = erp_lat_grid(erp_height)
    rows = np.abs(lat) > math.pi / 2 - math.radians(cap_deg)
    return np.repeat(rows[:, None], erp_width, axis=1)


def blend_maps(
    aligned_erp: list[ErpImage],
    layout: IcosahedronLayout,
    scheme: str,
    erp_width: int,
    erp_height: int,
    blend_config: BlendConfig,
    exclude_mask: np.ndarray | None = None,
) -> tuple[ErpImage, ErpImage, PoissonStats | None]:
    """Blend aligned per-face ERP maps; returns (final, d_nn, poisson_stats)."""
    nn_weights = compute_weights(layout, "nn", erp_width, erp_height, blend_config)
    d_nn = stitch_nn(aligned_erp, nn_weights)
    stats = None
    if scheme == "nn":
        final = ErpImage(d_nn.data.copy(), d_nn.mask.copy())
    elif scheme == "poisson":
        frustum = compute_weights(layout, "frustum", erp_width, erp_height, blend_config)
        final, stats = blend_poisson(
            aligned_erp, frustum, d_nn, blend_config, exclude_mask=exclude_mask
        )
    else:
        weights = compute_weights(layout, scheme, erp_width, erp_height, blend_config)
        final = blend_weighted(aligned_erp, weights)
    return final, d_nn, stats


def run_pipeline(config: PipelineConfig, out_dir=None) -> PipelineResult:
    """Project, convert, align, blend; optionally write all artifacts."""
    layout = build_icosahedron_layout(
        config.padding, config.tangent_width, config.tangent_height
    )

    gt_depth = None
    corruption = None
    if config.provider == "synthetic":
        data = generate_synthetic(
            config.effective_scene(), layout, config.erp_width, config.erp_height
        )
        perspective = data.perspective_maps
        gt_depth = data.gt_depth
        corruption = data.corruption
    else:
        if not config.provider_dir:
            raise ParameterError("provider 'files' requires provider_dir")
        perspective = load_provider(config.provider_dir, layout)
        if config.gt_depth_path:
            data = read_float_map(config.gt_depth_path).astype(np.float64)
            mask = np.isfinite(data) & (data > 0)
            gt_depth = ErpImage(np.where(mask, data, 1.0), mask)

    spherical = [convert_to_spherical(m, cam) for m, cam in zip(perspective, layout.cameras)]

    align_cfg = config.effective_alignment()
    aligned, grids, align_stats = align_multiscale(spherical, layout, align_cfg)

    aligned_erp = [
        _quantize_f32(tangent_to_erp(m.image, config.erp_width, config.erp_height))
        for m in aligned
    ]

    exclude = (
        pole_cap_mask(config.erp_width, config.erp_height, MATTERPORT_POLE_DEG)
        if config.matterport_mode
        else None
    )
    final, d_nn, blend_stats = blend_maps(
        aligned_erp,
        layout,
        config.blend_scheme,
        config.erp_width,
        config.erp_height,
        config.blend,
        exclude_mask=exclude,
    )

    metrics = None
    if gt_depth is not None:
        eval_mask = None if exclude is None else ~exclude
        metrics = evaluate_pipeline(final, gt_depth, eval_mask)

    result = PipelineResult(
        layout=layout,
        aligned_erp=aligned_erp,
        d_nn=d_nn,
        final=final,
        grids_per_stage=grids,
        align_stats=align_stats,
        blend_stats=blend_stats,
        metrics=metrics,
        gt_depth=gt_depth,
        corruption=corruption,
    )
    if out_dir is not None:
        write_artifacts(config, result, out_dir)
    return result


def grids_to_json_dict(stage: int, grids: list[DeformationGrid]) -> dict:
    return {
        "stage": stage,
        "grid_cols": grids[0].cols,
        "grid_rows": grids[0].rows,
        "faces": [
            {
                "face": g.face_index,
                "scales": [round(float(v), 17) for v in g.scales.ravel()],
                "offsets": [round(float(v), 17) for v in g.offsets.ravel()],
            }
            for g in grids
        ],
    }


def write_artifacts(config: PipelineConfig, result: PipelineResult, out_dir) -> dict[str, Path]:
    from . import reports

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    d = write_layout_json(out_dir / "layout.json", result.layout)
    paths["layout"] = out_dir / "layout.json"

    run_cfg = config_to_dict(config)
    run_cfg["layout_hash"] = d["layout_hash"]
    (out_dir / "run_config.json").write_text(json.dumps(run_cfg, indent=2, sort_keys=True) + "\n")
    paths["run_config"] = out_dir / "run_config.json"

    write_erp_pfm(out_dir / "final_disparity.pfm", result.final)
    paths["final"] = out_dir / "final_disparity.pfm"
    write_erp_pfm(out_dir / "dnn.pfm", result.d_nn)
    paths["dnn"] = out_dir / "dnn.pfm"

    if config.write_viz:
        reports.save_disparity_png(out_dir / "final_disparity.png", result.final)
        paths["viz"] = out_dir / "final_disparity.png"

    grid_dir = out_dir / "grids"
    grid_dir.mkdir(exist_ok=True)
    for stage, grids in enumerate(result.grids_per_stage):
        p = grid_dir / f"stage_{stage}.json"
        p.write_text(json.dumps(grids_to_json_dict(stage, grids), indent=1) + "\n")
    paths["grids"] = grid_dir

    if config.dump_aligned:
        adir = out_dir / "aligned"
        adir.mkdir(exist_ok=True)
        for face, erp in enumerate(result.aligned_erp):
            write_erp_pfm(adir / provider_filename(face), erp)
        paths["aligned"] = adir

    if config.dump_weights:
        for scheme in SCHEMES:
            fields = compute_weights(
                result.layout, scheme, config.erp_width, config.erp_height, config.blend
            )
            reports.save_weight_fields(out_dir / "weights", fields)
        paths["weights"] = out_dir / "weights"

    if result.gt_depth is not None and config.provider == "synthetic":
        write_erp_pfm(out_dir / "gt_depth.pfm", result.gt_depth)
        paths["gt_depth"] = out_dir / "gt_depth.pfm"

    if result.corruption is not None:
        (out_dir / "corruption.json").write_text(json.dumps(result.corruption, indent=2) + "\n")

    if result.metrics is not None:
        reports.write_metrics(out_dir, result.metrics)
        paths["metrics"] = out_dir / "metrics.json"

    return paths


def rerun_blend(run_dir, scheme: str | None = None) -> tuple[ErpImage, Path]:
    """Re-blend from dumped aligned maps; bit-exact with the original run."""
    run_dir = Path(run_dir)
    cfg_dict = json.loads((run_dir / "run_config.json").read_text())
    cfg_dict.pop("layout_hash", None)
    config = config_from_dict(cfg_dict)
    if scheme is not None:
        config = replace(config, blend_scheme=scheme)
    layout = load_layout_json(run_dir / "layout.json")

    adir = run_dir / "aligned"
    if not adir.exists():
        raise ParameterError(f"no aligned dumps under {run_dir}; run the pipeline with dump_aligned")
    aligned = [read_erp_pfm(adir / provider_filename(face)) for face in range(20)]

    exclude = (
        pole_cap_mask(config.erp_width, config.erp_height, MATTERPORT_POLE_DEG)
        if config.matterport_mode
        else None
    )
    final, _, _ = blend_maps(
        aligned,
        layout,
        config.blend_scheme,
        config.erp_width,
        config.erp_height,
        config.blend,
        exclude_mask=exclude,
    )
    out = run_dir / f"reblend_{config.blend_scheme}.pfm"
    write_erp_pfm(out, final)
    return final, out


def write_synthetic_provider(config: PipelineConfig, out_dir) -> dict[str, Path]:
    """Render the synthetic scene to a provider directory plus ground truth."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    layout = build_icosahedron_layout(
        config.padding, config.tangent_width, config.tangent_height
    )
    scene = config.effective_scene()
    data = generate_synthetic(scene, layout, config.erp_width, config.erp_height)

    write_layout_json(out_dir / "layout.json", layout)
    write_provider_dir(
        out_dir / "provider", layout, data.perspective_maps, "synthetic-oracle", "1"
    )
    write_erp_pfm(out_dir / "gt_depth.pfm", data.gt_depth)
    write_erp_pfm(out_dir / "gt_disparity.pfm", data.gt_disparity)
    (out_dir / "corruption.json").write_text(json.dumps(data.corruption, indent=2) + "\n")

    rgb = render_erp_rgb(scene, config.erp_width, config.erp_height)
    import imageio.v3 as iio

    iio.imwrite(out_dir / "erp_rgb.png", (rgb.data * 255).round().astype(np.uint8))
    return {
        "layout": out_dir / "layout.json",
        "provider": out_dir / "provider",
        "gt_depth": out_dir / "gt_depth.pfm",
    }
