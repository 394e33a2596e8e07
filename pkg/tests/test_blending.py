import math

import numpy as np
import pytest

from panodepth.blending import (
    BlendConfig,
    BlendWeightField,
    blend_poisson,
    blend_weighted,
    compute_weights,
    stitch_nn,
)
from panodepth.errors import ParameterError
from panodepth.geometry import build_icosahedron_layout, erp_lat_grid, erp_lon_grid, footprint_mask
from panodepth.resampling import ErpImage


@pytest.fixture(scope="module")
def layout():
    return build_icosahedron_layout(0.3, 400, 346)


@pytest.fixture(scope="module")
def small_weights(layout):
    return {
        scheme: compute_weights(layout, scheme, 256, 128)
        for scheme in ("nn", "mean", "radial", "frustum")
    }


def _face_maps(layout, w, h, fn):
    """Per-face ERP maps holding fn(lon, lat) inside each footprint."""
    lon = erp_lon_grid(w)[None, :]
    lat = erp_lat_grid(h)[:, None]
    field = np.broadcast_to(fn(lon, lat), (h, w)).copy()
    out = []
    for cam in layout.cameras:
        m = footprint_mask(cam, w, h)
        data = np.where(m, field, 0.0)
        out.append(ErpImage(data, m))
    return out


class TestComputeWeights:
    def test_unknown_scheme_rejected(self, layout):
        with pytest.raises(ParameterError):
            compute_weights(layout, "pyramid", 256, 128)

    def test_tangent_point_weight_is_maximal(self, layout, small_weights):
        from panodepth.geometry import spherical_to_erp_pixel

        for scheme in ("nn", "mean", "radial", "frustum"):
            fields = small_weights[scheme]
            for cam in layout.cameras[::7]:
                u, v = spherical_to_erp_pixel(
                    cam.tangent_point.lon, cam.tangent_point.lat, 256, 128
                )
                r, c = int(round(float(v))), int(round(float(u))) % 256
                own = fields[cam.face_index].weights[r, c]
                others = max(
                    f.weights[r, c] for f in fields if f.face_index != cam.face_index
                )
                assert own >= others

    def test_nn_selects_exactly_one_face(self, small_weights):
        total = np.sum([f.weights for f in small_weights["nn"]], axis=0)
        assert np.allclose(total, 1.0)
        for f in small_weights["nn"]:
            assert set(np.unique(f.weights)) <= {0.0, 1.0}

    def test_mean_weight_is_inverse_coverage(self, layout, small_weights):
        from panodepth.geometry import coverage_map

        cov = coverage_map(layout, 256, 128)
        pix = np.argwhere(cov == 4)
        r, c = pix[len(pix) // 2]
        for f, cam in zip(small_weights["mean"], layout.cameras):
            inside = footprint_mask(cam, 256, 128)[r, c]
            if inside:
                assert f.weights[r, c] == pytest.approx(0.25, abs=1e-12)
            else:
                assert f.weights[r, c] == 0.0

    @pytest.mark.parametrize("scheme", ["mean", "radial", "frustum"])
    def test_weights_sum_to_one_on_covered_pixels(self, layout, scheme):
        fields = compute_weights(layout, scheme, 512, 256)
        total = np.sum([f.weights for f in fields], axis=0)
        from panodepth.geometry import coverage_map

        covered = coverage_map(layout, 512, 256) > 0
        assert np.abs(total[covered] - 1.0).max() < 1e-9
        assert np.abs(total[~covered]).max() == 0.0 if (~covered).any() else True

    @pytest.mark.parametrize("scheme", ["mean", "radial", "frustum"])
    def test_weights_sum_to_one_at_full_resolution(self, layout, scheme):
        # every 2048x1024 pixel is covered at padding 0.3, so the normalized
        # weights must sum to one everywhere
        fields = compute_weights(layout, scheme, 2048, 1024)
        total = np.zeros((1024, 2048))
        for f in fields:
            total += f.weights
        assert np.abs(total - 1.0).max() < 1e-9

    def test_weights_vanish_outside_footprint(self, layout, small_weights):
        for scheme in ("mean", "radial", "frustum"):
            for f, cam in zip(small_weights[scheme], layout.cameras):
                outside = ~footprint_mask(cam, 256, 128)
                assert np.abs(f.weights[outside]).max() == 0.0


class TestStitchNN:
    def test_identical_maps_reproduce_input(self, layout, small_weights):
        maps = _face_maps(layout, 256, 128, lambda lon, lat: np.sin(lon) + 2.0)
        out = stitch_nn(maps, small_weights["nn"])
        assert out.mask.all()
        lon = erp_lon_grid(256)[None, :]
        expected = np.broadcast_to(np.sin(lon) + 2.0, (128, 256))
        assert np.abs(out.data - expected).max() < 1e-12

    def test_two_half_maps_make_a_hard_step(self):
        h, w = 64, 128
        left = np.zeros((h, w), dtype=bool)
        left[:, : w // 2] = True
        m0 = ErpImage(np.zeros((h, w)), np.ones((h, w), dtype=bool))
        m1 = ErpImage(np.ones((h, w)), np.ones((h, w), dtype=bool))
        wf0 = BlendWeightField("nn", 0, left.astype(float))
        wf1 = BlendWeightField("nn", 1, 1.0 - left.astype(float))
        out = stitch_nn([m0, m1], [wf0, wf1])
        assert (out.data[:, : w // 2] == 0.0).all()
        assert (out.data[:, w // 2 :] == 1.0).all()


class TestBlendWeighted:
    @pytest.mark.parametrize("scheme", ["mean", "radial", "frustum"])
    def test_identical_maps_any_scheme(self, layout, small_weights, scheme):
        maps = _face_maps(layout, 256, 128, lambda lon, lat: np.cos(lat) * np.sin(lon))
        out = blend_weighted(maps, small_weights[scheme])
        lon = erp_lon_grid(256)[None, :]
        lat = erp_lat_grid(128)[:, None]
        expected = np.cos(lat) * np.sin(lon)
        assert np.abs(out.data[out.mask] - np.broadcast_to(expected, out.data.shape)[out.mask]).max() < 1e-9

    def test_one_hot_weights_select_single_face(self, layout):
        maps = _face_maps(layout, 256, 128, lambda lon, lat: lon + 2 * lat)
        face = 9
        fields = []
        for cam in layout.cameras:
            w = np.zeros((128, 256))
            if cam.face_index == face:
                w[footprint_mask(cam, 256, 128)] = 1.0
            fields.append(BlendWeightField("nn", cam.face_index, w))
        out = blend_weighted(maps, fields)
        assert (out.mask == maps[face].mask).all()
        assert np.abs(out.data[out.mask] - maps[face].data[out.mask]).max() == 0.0


class TestBlendPoisson:
    def test_identical_maps_equal_to_stitch_fixed_point(self, layout):
        maps = _face_maps(layout, 256, 128, lambda lon, lat: np.sin(2 * lon) + lat)
        weights = compute_weights(layout, "frustum", 256, 128)
        nn = compute_weights(layout, "nn", 256, 128)
        d_nn = stitch_nn(maps, nn)
        out, stats = blend_poisson(maps, weights, d_nn)
        assert stats.converged
        rel = np.abs(out.data - d_nn.data)[out.mask] / np.maximum(np.abs(d_nn.data[out.mask]), 1e-9)
        assert rel.max() < 1e-6

    def test_constant_stitch_zero_gradients_exact(self):
        h, w = 32, 64
        full = np.ones((h, w), dtype=bool)
        c = 4.5
        maps = [ErpImage(np.full((h, w), c), full)]
        weights = [BlendWeightField("frustum", 0, np.ones((h, w)))]
        d_nn = ErpImage(np.full((h, w), c), full)
        out, stats = blend_poisson(maps, weights, d_nn)
        assert np.abs(out.data - c).max() < 1e-12

    def test_offset_equivariance(self, layout):
        rng = np.random.default_rng(3)
        maps = _face_maps(layout, 256, 128, lambda lon, lat: np.sin(lon) * np.cos(lat))
        noisy = [ErpImage(m.data + rng.normal(scale=0.02, size=m.data.shape) * m.mask, m.mask) for m in maps]
        weights = compute_weights(layout, "frustum", 256, 128)
        d_nn = stitch_nn(noisy, compute_weights(layout, "nn", 256, 128))
        out1, _ = blend_poisson(noisy, weights, d_nn)
        c = 3.75
        shifted = [ErpImage(m.data + c * m.mask, m.mask) for m in noisy]
        d_nn2 = ErpImage(d_nn.data + c * d_nn.mask, d_nn.mask)
        out2, _ = blend_poisson(shifted, weights, d_nn2)
        assert np.abs(out2.data[out2.mask] - (out1.data[out1.mask] + c)).max() < 1e-6

    def test_longitude_seam_continuity(self, layout):
        # a field smooth across the seam must stay smooth after blending
        maps = _face_maps(layout, 256, 128, lambda lon, lat: np.sin(lon) + 0.3 * np.cos(2 * lon))
        weights = compute_weights(layout, "frustum", 256, 128)
        d_nn = stitch_nn(maps, compute_weights(layout, "nn", 256, 128))
        out, _ = blend_poisson(maps, weights, d_nn)
        seam_jump = np.abs(out.data[:, 0] - out.data[:, -1])
        interior_jump = np.abs(np.diff(out.data, axis=1)).max(axis=1)
        assert np.median(seam_jump) <= 2.0 * np.median(interior_jump)

    def test_pole_exclusion_passthrough(self, layout):
        maps = _face_maps(layout, 256, 128, lambda lon, lat: np.sin(lon) * np.cos(lat))
        weights = compute_weights(layout, "frustum", 256, 128)
        d_nn = stitch_nn(maps, compute_weights(layout, "nn", 256, 128))
        lat = erp_lat_grid(128)
        exclude = (np.abs(lat) > math.radians(65.0))[:, None] & np.ones((128, 256), dtype=bool)
        out, _ = blend_poisson(maps, weights, d_nn, exclude_mask=exclude)
        assert (out.data[exclude] == d_nn.data[exclude]).all()

    def test_no_seam_impulse_on_smooth_consistent_inputs(self, layout):
        # gradients at footprint boundaries must not spike above 5x the
        # interior gradient median when the inputs agree
        maps = _face_maps(layout, 512, 256, lambda lon, lat: 2.0 + np.sin(lon) * np.cos(lat))
        weights = compute_weights(layout, "frustum", 512, 256)
        d_nn = stitch_nn(maps, compute_weights(layout, "nn", 512, 256))
        out, _ = blend_poisson(maps, weights, d_nn)
        bnd = np.zeros((256, 512), dtype=bool)
        for cam in layout.cameras:
            m = footprint_mask(cam, 512, 256)
            bnd |= (m ^ np.roll(m, 1, axis=1)) | (m ^ np.roll(m, 1, axis=0))
        gu = np.abs(np.roll(out.data, -1, axis=1) - out.data)
        assert gu[bnd].max() <= 5.0 * np.median(gu[~bnd])

    def test_converges_on_random_inputs(self, layout):
        rng = np.random.default_rng(11)
        maps = []
        for cam in layout.cameras:
            m = footprint_mask(cam, 256, 128)
            maps.append(ErpImage(np.where(m, rng.normal(size=(128, 256)), 0.0), m))
        weights = compute_weights(layout, "frustum", 256, 128)
        d_nn = stitch_nn(maps, compute_weights(layout, "nn", 256, 128))
        out, stats = blend_poisson(maps, weights, d_nn)
        assert stats.converged
        assert np.isfinite(out.data[out.mask]).all()
