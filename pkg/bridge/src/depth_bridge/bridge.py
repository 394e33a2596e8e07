"""Inference over the 20 tangent images and provider-format serialization.

The bridge is deliberately dumb: it never standardizes, aligns or converts
disparity semantics — its outputs are the model's raw relative perspective
disparity, written as PFMs with a manifest that echoes the layout hash.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .models import ModelError, load_model
from .pfm import write_pfm


class BridgeError(RuntimeError):
    pass


def _load_layout(layout_json) -> dict:
    layout = json.loads(Path(layout_json).read_text())
    cams = layout.get("cameras", [])
    if len(cams) != 20:
        raise BridgeError(f"layout must describe 20 cameras, found {len(cams)}")
    if "layout_hash" not in layout:
        raise BridgeError("layout file carries no hash; regenerate it")
    return layout


def _load_image(path) -> np.ndarray:
    import imageio.v3 as iio

    raw = np.asarray(iio.imread(path))
    if raw.ndim == 2:
        raw = np.stack([raw] * 3, axis=-1)
    if raw.shape[-1] == 4:
        raw = raw[..., :3]
    peak = 65535.0 if raw.dtype == np.uint16 else 255.0
    return raw.astype(np.float32) / peak


def _atomic_write_pfm(path: Path, data: np.ndarray) -> None:
    tmp = path.with_suffix(".pfm.tmp")
    write_pfm(tmp, data)
    os.replace(tmp, path)


def bridge_run(layout_json, image_dir, out_dir, model_id: str = "fixed_filter") -> Path:
    """Run inference per face and write the provider directory.

    Images must be named ``tangent_00.png`` … ``tangent_19.png`` and match the
    layout's tangent resolution; any mismatch aborts before inference starts.
    """
    layout = _load_layout(layout_json)
    image_dir = Path(image_dir)
    out_dir = Path(out_dir)

    cams = sorted(layout["cameras"], key=lambda c: c["face"])
    width, height = cams[0]["width_px"], cams[0]["height_px"]

    images = {}
    for cam in cams:
        face = cam["face"]
        path = image_dir / f"tangent_{face:02d}.png"
        if not path.exists():
            raise BridgeError(f"missing tangent image: {path}")
        img = _load_image(path)
        if img.shape[:2] != (height, width):
            raise BridgeError(
                f"face {face}: image {img.shape[:2]} does not match layout "
                f"resolution {(height, width)}"
            )
        images[face] = img

    try:
        model, version = load_model(model_id)
    except ModelError as exc:
        raise BridgeError(str(exc)) from exc

    out_dir.mkdir(parents=True, exist_ok=True)
    faces = []
    for cam in cams:
        face = cam["face"]
        disp = model.predict(images[face])
        if not np.isfinite(disp).all():
            raise BridgeError(f"face {face}: model produced non-finite disparity")
        name = f"disp_{face:02d}.pfm"
        _atomic_write_pfm(out_dir / name, disp)
        faces.append({"face": face, "file": name})

    manifest = {
        "layout_hash": layout["layout_hash"],
        "model": {"id": model_id, "version": version},
        "tangent_resolution": [width, height],
        "faces": faces,
    }
    mpath = out_dir / "manifest.json"
    tmp = mpath.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, mpath)
    return mpath
