"""Model registry.

Every model takes an RGB float image in [0, 1] of shape (H, W, 3) and returns
raw relative perspective disparity as float32 (H, W) — no standardization, no
unit convention beyond "larger means closer".
"""

from __future__ import annotations

import numpy as np
import torch


class ModelError(RuntimeError):
    pass


def _gaussian_kernel(sigma: float) -> torch.Tensor:
    radius = max(1, int(3 * sigma))
    xs = torch.arange(-radius, radius + 1, dtype=torch.float32)
    k = torch.exp(-0.5 * (xs / sigma) ** 2)
    k = k / k.sum()
    return torch.outer(k, k)[None, None]


class FixedFilterModel(torch.nn.Module):
    """Deterministic stand-in estimator with fixed analytic weights.

    Combines smoothed inverse luminance (dark tends to be far in indoor
    imagery is a non-claim here; it simply yields image-dependent structure),
    local contrast, and a radial prior.  The radial term guarantees a
    non-constant, finite output for any input, including flat images.
    """

    VERSION = "1"

    def __init__(self):
        super().__init__()
        self.register_buffer("k_coarse", _gaussian_kernel(12.0))
        self.register_buffer("k_fine", _gaussian_kernel(2.0))

    @torch.no_grad()
    def forward(self, rgb: torch.Tensor) -> torch.Tensor:
        # rgb: (H, W, 3) in [0, 1]
        lum = (rgb * torch.tensor([0.2126, 0.7152, 0.0722])).sum(-1)
        h, w = lum.shape
        x = lum[None, None]

        def blur(img, k):
            pad = (k.shape[-1] // 2,) * 4
            return torch.nn.functional.conv2d(
                torch.nn.functional.pad(img, pad, mode="replicate"), k
            )

        coarse = blur(x, self.k_coarse)[0, 0]
        fine = blur(x, self.k_fine)[0, 0]
        contrast = (fine - coarse).abs()

        ys = torch.linspace(-1.0, 1.0, h)[:, None]
        xs = torch.linspace(-1.0, 1.0, w)[None, :]
        radial = 1.0 - 0.5 * (xs**2 + ys**2)

        return 2.0 * radial + 1.5 * (1.0 - coarse) + contrast

    def predict(self, rgb: np.ndarray) -> np.ndarray:
        out = self.forward(torch.from_numpy(np.ascontiguousarray(rgb, dtype=np.float32)))
        return out.numpy().astype(np.float32)


class _MidasModel:
    """Wrapper over torch.hub MiDaS variants (needs network on first load)."""

    def __init__(self, hub_name: str):
        try:
            self.model = torch.hub.load("intel-isl/MiDaS", hub_name)
            transforms = torch.hub.load("intel-isl/MiDaS", "transforms")
        except Exception as exc:
            raise ModelError(
                f"could not load {hub_name!r} from torch.hub (network/cache required): {exc}"
            ) from exc
        self.transform = (
            transforms.small_transform if "small" in hub_name.lower() else transforms.dpt_transform
        )
        self.model.eval()
        self.VERSION = hub_name

    @torch.no_grad()
    def predict(self, rgb: np.ndarray) -> np.ndarray:
        img = (np.clip(rgb, 0.0, 1.0) * 255).astype(np.uint8)
        batch = self.transform(img)
        pred = self.model(batch)
        pred = torch.nn.functional.interpolate(
            pred.unsqueeze(1), size=rgb.shape[:2], mode="bicubic", align_corners=False
        )[0, 0]
        return pred.numpy().astype(np.float32)


_HUB_NAMES = {
    "midas_v21_small": "MiDaS_small",
    "midas_v21": "MiDaS",
    "dpt_large": "DPT_Large",
    "dpt_hybrid": "DPT_Hybrid",
}


def load_model(model_id: str):
    """Return (model, version) for a registry id."""
    if model_id == "fixed_filter":
        m = FixedFilterModel()
        return m, m.VERSION
    if model_id in _HUB_NAMES:
        m = _MidasModel(_HUB_NAMES[model_id])
        return m, m.VERSION
    raise ModelError(
        f"unknown model {model_id!r}; known: fixed_filter, {', '.join(sorted(_HUB_NAMES))}"
    )
