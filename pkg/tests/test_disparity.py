import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from panodepth.disparity import (
    PERSPECTIVE,
    SPHERICAL,
    DisparityMap,
    convert_to_spherical,
    median_and_mad,
    standardize,
)
from panodepth.errors import DegenerateInputError, ParameterError, SemanticsError
from panodepth.geometry import build_icosahedron_layout
from panodepth.resampling import ErpImage, TangentImage
from panodepth.synthetic import SyntheticScene, render_perspective_disparity


@pytest.fixture(scope="module")
def layout():
    return build_icosahedron_layout(0.3, 400, 346)


class TestMedianAndMad:
    def test_singleton(self):
        assert median_and_mad([3.0]) == (3.0, 0.0)

    def test_odd_count(self):
        med, mad = median_and_mad([1, 2, 3, 4, 5])
        assert med == 3.0
        assert mad == pytest.approx(1.2)

    def test_even_count_uses_lower_median(self):
        med, mad = median_and_mad([1, 2, 3, 4])
        assert med == 2.0
        assert mad == pytest.approx(1.0)

    def test_empty_rejected(self):
        with pytest.raises(ParameterError):
            median_and_mad([])


def _erp_map(values, semantics=SPHERICAL):
    h = 8
    data = np.zeros((h, 2 * h))
    mask = np.zeros((h, 2 * h), dtype=bool)
    flat = np.asarray(values, dtype=float)
    data.ravel()[: flat.size] = flat
    mask.ravel()[: flat.size] = True
    return DisparityMap(ErpImage(data, mask), semantics=semantics)


class TestStandardize:
    def test_hand_computed_values(self):
        out = standardize(_erp_map([1, 2, 3, 4, 5]))
        got = out.data[out.mask]
        assert np.allclose(got, [-5 / 3, -5 / 6, 0.0, 5 / 6, 5 / 3], atol=1e-12)
        assert out.standardized

    @settings(max_examples=50, deadline=None)
    @given(
        a=st.floats(0.1, 10.0),
        b=st.floats(-5.0, 5.0),
    )
    def test_affine_invariance(self, a, b):
        rng = np.random.default_rng(7)
        vals = rng.normal(size=40)
        base = standardize(_erp_map(vals))
        scaled = standardize(_erp_map(a * vals + b))
        assert np.allclose(base.data[base.mask], scaled.data[scaled.mask], atol=1e-9)

    def test_constant_map_rejected(self):
        with pytest.raises(DegenerateInputError):
            standardize(_erp_map(np.full(10, 4.2)))

    def test_output_has_zero_median_unit_mad(self):
        rng = np.random.default_rng(0)
        out = standardize(_erp_map(rng.normal(size=99)))
        med, mad = median_and_mad(out.data[out.mask])
        assert abs(med) < 1e-9
        assert abs(mad - 1.0) < 1e-9


class TestConvertToSpherical:
    def test_principal_point_unchanged_and_45deg_scaled(self, layout):
        cam = layout.cameras[0]
        d = DisparityMap(
            TangentImage.from_data(cam, np.ones((cam.height_px, cam.width_px))),
            semantics=PERSPECTIVE,
        )
        out = convert_to_spherical(d, cam)
        assert out.semantics == SPHERICAL
        xs, ys = cam.pixel_plane_axes()
        r2 = xs[None, :] ** 2 + ys[:, None] ** 2
        # nearest pixel to the principal point
        i = np.unravel_index(np.argmin(r2), r2.shape)
        assert out.data[i] == pytest.approx(1.0 / np.sqrt(1.0 + r2[i]), abs=1e-12)
        # a ray 45 degrees off axis has x^2 + y^2 = 1 and cosine 1/sqrt(2)
        j = np.unravel_index(np.argmin(np.abs(r2 - 1.0)), r2.shape)
        assert out.data[j] == pytest.approx(1.0 / np.sqrt(1.0 + r2[j]), abs=1e-12)
        assert abs(out.data[j] - 1.0 / np.sqrt(2.0)) < 5e-3

    def test_exact_inverse_radial_distance_on_analytic_scene(self, layout):
        scene = SyntheticScene(kind="sphere_in_box", disparity_gain=1.0)
        for cam in layout.cameras[::6]:
            persp = render_perspective_disparity(scene, cam)
            d = DisparityMap(persp, semantics=PERSPECTIVE)
            out = convert_to_spherical(d, cam)
            xs, ys = cam.pixel_plane_axes()
            x = np.broadcast_to(xs[None, :], persp.data.shape)
            y = np.broadcast_to(ys[:, None], persp.data.shape)
            dirs = cam.tangent_vector + x[..., None] * cam.axis_x + y[..., None] * cam.axis_y
            dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
            radial = scene.ray_depth(dirs)
            rel = np.abs(out.data - 1.0 / radial) * radial
            assert rel.max() < 1e-10

    def test_never_increases_magnitude(self, layout):
        cam = layout.cameras[12]
        rng = np.random.default_rng(1)
        vals = rng.normal(size=(cam.height_px, cam.width_px))
        d = DisparityMap(TangentImage.from_data(cam, vals), semantics=PERSPECTIVE)
        out = convert_to_spherical(d, cam)
        assert (np.abs(out.data) <= np.abs(vals) + 1e-15).all()

    def test_commutes_with_positive_scaling(self, layout):
        cam = layout.cameras[4]
        rng = np.random.default_rng(2)
        vals = rng.uniform(0.1, 2.0, size=(cam.height_px, cam.width_px))
        a = 3.7
        d1 = convert_to_spherical(
            DisparityMap(TangentImage.from_data(cam, a * vals), semantics=PERSPECTIVE), cam
        )
        d2 = convert_to_spherical(
            DisparityMap(TangentImage.from_data(cam, vals), semantics=PERSPECTIVE), cam
        )
        assert np.allclose(d1.data, a * d2.data, atol=1e-12)

    def test_wrong_semantics_rejected(self, layout):
        cam = layout.cameras[0]
        d = DisparityMap(
            TangentImage.from_data(cam, np.ones((cam.height_px, cam.width_px))),
            semantics=SPHERICAL,
        )
        with pytest.raises(SemanticsError):
            convert_to_spherical(d, cam)

    def test_wrong_face_rejected(self, layout):
        cam0, cam1 = layout.cameras[0], layout.cameras[1]
        d = DisparityMap(
            TangentImage.from_data(cam0, np.ones((cam0.height_px, cam0.width_px))),
            semantics=PERSPECTIVE,
        )
        with pytest.raises(SemanticsError):
            convert_to_spherical(d, cam1)

    def test_erp_based_map_rejected(self, layout):
        d = DisparityMap(ErpImage.from_data(np.ones((64, 128))), semantics=PERSPECTIVE)
        with pytest.raises(SemanticsError):
            convert_to_spherical(d, layout.cameras[0])
