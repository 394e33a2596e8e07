import numpy as np
import pytest

from panodepth.errors import ParameterError
from panodepth.geometry import build_icosahedron_layout
from panodepth.synthetic import (
    SyntheticScene,
    generate_synthetic,
    render_erp_depth,
    render_perspective_disparity,
)


@pytest.fixture(scope="module")
def layout():
    return build_icosahedron_layout(0.3, 400, 346)


class TestScene:
    def test_unknown_kind_rejected(self):
        with pytest.raises(ParameterError):
            SyntheticScene(kind="forest")

    def test_depth_positive_and_bounded_by_diagonal(self):
        scene = SyntheticScene(kind="sphere_in_box")
        depth = render_erp_depth(scene, 256, 128)
        assert (depth.data > 0).all()
        assert depth.data.max() <= scene.max_depth + 1e-12

    def test_principal_point_disparity_is_inverse_axis_distance(self, layout):
        scene = SyntheticScene(disparity_gain=1.0)
        he = np.asarray(scene.room_half_extents)
        for cam in layout.cameras[::4]:
            t = cam.tangent_vector
            expected_depth = float((he / np.maximum(np.abs(t), 1e-300)).min())
            # evaluate analytically at the principal point itself
            persp = scene.disparity_gain * 1.0 / expected_depth
            img = render_perspective_disparity(scene, cam)
            xs, ys = cam.pixel_plane_axes()
            r2 = xs[None, :] ** 2 + ys[:, None] ** 2
            i = np.unravel_index(np.argmin(r2), r2.shape)
            # nearest pixel to the axis agrees to first order
            assert img.data[i] == pytest.approx(persp, rel=5e-3)

    def test_sphere_appears_in_front_of_wall(self):
        box = SyntheticScene()
        withball = SyntheticScene(kind="sphere_in_box")
        d_box = render_erp_depth(box, 256, 128)
        d_ball = render_erp_depth(withball, 256, 128)
        assert (d_ball.data <= d_box.data + 1e-12).all()
        assert (d_ball.data < d_box.data - 1e-6).any()


class TestGenerateSynthetic:
    def test_reproducible_corruption_table(self, layout):
        a = generate_synthetic(SyntheticScene(rng_seed=9), layout, 128, 64)
        b = generate_synthetic(SyntheticScene(rng_seed=9), layout, 128, 64)
        assert a.corruption == b.corruption
        for ma, mb in zip(a.perspective_maps, b.perspective_maps):
            assert ma.data.tobytes() == mb.data.tobytes()

    def test_corruption_within_configured_ranges(self, layout):
        data = generate_synthetic(SyntheticScene(rng_seed=3), layout, 128, 64)
        for row in data.corruption:
            assert 0.5 <= row["scale"] <= 2.0
            assert -0.5 <= row["offset"] <= 0.5

    def test_uncorrupted_maps_are_exact(self, layout):
        scene = SyntheticScene(rng_seed=1)
        data = generate_synthetic(scene, layout, 128, 64, corrupt=False)
        for m, cam in zip(data.perspective_maps, layout.cameras):
            exact = render_perspective_disparity(scene, cam)
            assert np.array_equal(m.data, exact.data)
        assert all(row["scale"] == 1.0 and row["offset"] == 0.0 for row in data.corruption)

    def test_gt_disparity_is_reciprocal_depth(self, layout):
        data = generate_synthetic(SyntheticScene(rng_seed=2), layout, 128, 64)
        assert np.allclose(data.gt_disparity.data * data.gt_depth.data, 1.0, atol=1e-12)
