import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from panodepth.errors import ParameterError
from panodepth.geometry import (
    IcosahedronLayout,
    SphericalCoord,
    TangentCamera,
    build_icosahedron_layout,
    coverage_map,
    erp_pixel_to_spherical,
    footprint_mask,
    gnomonic_forward,
    gnomonic_inverse,
    layout_from_json_dict,
    layout_hash,
    spherical_to_erp_pixel,
)


@pytest.fixture(scope="module")
def layout():
    return build_icosahedron_layout(0.3, 400, 346)


class TestSphericalCoord:
    def test_longitude_wraps(self):
        assert SphericalCoord(1.5 * math.pi, 0.0).lon == pytest.approx(-0.5 * math.pi)
        assert SphericalCoord(-math.pi, 0.0).lon == -math.pi

    def test_latitude_clamps(self):
        assert SphericalCoord(0.0, 2.0).lat == pytest.approx(math.pi / 2)

    @settings(max_examples=200, deadline=None)
    @given(
        lon=st.floats(-math.pi, math.pi - 1e-9),
        lat=st.floats(-math.pi / 2 + 1e-3, math.pi / 2 - 1e-3),
    )
    def test_unit_vector_round_trip(self, lon, lat):
        c = SphericalCoord(lon, lat)
        back = SphericalCoord.from_unit_vector(c.to_unit_vector())
        assert abs(back.lon - c.lon) < 1e-12
        assert abs(back.lat - c.lat) < 1e-12


class TestLayoutConstruction:
    def test_padding_out_of_range(self):
        with pytest.raises(ParameterError):
            build_icosahedron_layout(-0.1)
        with pytest.raises(ParameterError):
            build_icosahedron_layout(1.2)

    def test_twenty_distinct_unit_tangent_points(self, layout):
        pts = np.array([c.tangent_point.to_unit_vector() for c in layout.cameras])
        assert pts.shape == (20, 3)
        assert np.allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-12)
        dots = pts @ pts.T
        np.fill_diagonal(dots, 0.0)
        assert dots.max() < 1.0 - 1e-6

    def test_five_fold_symmetry(self, layout):
        # rotating the tangent points by 72 degrees about the poles permutes them
        pts = np.array([c.tangent_point.to_unit_vector() for c in layout.cameras])
        a = math.radians(72.0)
        rot = np.array(
            [[math.cos(a), -math.sin(a), 0.0], [math.sin(a), math.cos(a), 0.0], [0.0, 0.0, 1.0]]
        )
        rotated = pts @ rot.T
        dists = np.linalg.norm(rotated[:, None, :] - pts[None, :, :], axis=2)
        assert dists.min(axis=1).max() < 1e-12

    def test_equator_mirror_symmetry(self, layout):
        lats = sorted(c.tangent_point.lat for c in layout.cameras)
        assert np.allclose(lats, -np.array(lats[::-1]), atol=1e-12)

    def test_footprint_angular_diameter_exceeds_72deg(self, layout):
        for cam in layout.cameras:
            corners = cam.corner_directions()
            dots = np.clip(corners @ corners.T, -1.0, 1.0)
            assert np.degrees(np.arccos(dots)).max() > 72.0

    def test_unpadded_rect_tightly_bounds_face(self):
        from panodepth.geometry import icosahedron_face_vertices

        lay = build_icosahedron_layout(0.0, 400, 346)
        for cam, verts in zip(lay.cameras, icosahedron_face_vertices()):
            t = cam.tangent_vector
            c = verts @ t
            px = (verts @ cam.axis_x) / c
            py = (verts @ cam.axis_y) / c
            assert px.min() == pytest.approx(cam.center_x - cam.half_extent_x, abs=1e-12)
            assert px.max() == pytest.approx(cam.center_x + cam.half_extent_x, abs=1e-12)
            assert py.min() == pytest.approx(cam.center_y - cam.half_extent_y, abs=1e-12)
            assert py.max() == pytest.approx(cam.center_y + cam.half_extent_y, abs=1e-12)

    def test_face_interior_points_inside_own_unpadded_rect(self):
        from panodepth.geometry import icosahedron_face_vertices

        lay = build_icosahedron_layout(0.0, 400, 346)
        rng = np.random.default_rng(3)
        for cam, verts in zip(lay.cameras, icosahedron_face_vertices()):
            w = rng.dirichlet(np.ones(3), size=50)
            pts = w @ verts
            pts /= np.linalg.norm(pts, axis=1, keepdims=True)
            lon = np.arctan2(pts[:, 1], pts[:, 0])
            lat = np.arcsin(pts[:, 2])
            x, y, valid = cam.plane_from_direction(lon, lat)
            assert valid.all()
            assert cam.contains_plane(x, y).all()


class TestGnomonic:
    def test_tangent_point_projects_to_origin(self, layout):
        for cam in layout.cameras[:5]:
            x, y, valid = gnomonic_forward(cam, cam.tangent_point)
            assert valid
            assert abs(x) < 1e-12 and abs(y) < 1e-12

    def test_equatorial_closed_form(self):
        cam = _equator_camera()
        theta = 0.3
        x, y, valid = gnomonic_forward(cam, SphericalCoord(theta, 0.0))
        assert valid
        assert x == pytest.approx(math.tan(theta), abs=1e-14)
        assert y == pytest.approx(0.0, abs=1e-14)

    def test_antipode_invalid(self, layout):
        cam = layout.cameras[7]
        anti = SphericalCoord.from_unit_vector(-cam.tangent_vector)
        _, _, valid = gnomonic_forward(cam, anti)
        assert not valid

    def test_inverse_origin_is_tangent_point(self, layout):
        for cam in layout.cameras[:5]:
            p = gnomonic_inverse(cam, 0.0, 0.0)
            assert abs(p.lon - cam.tangent_point.lon) < 1e-12
            assert abs(p.lat - cam.tangent_point.lat) < 1e-12

    def test_inverse_36deg_along_equator(self):
        cam = _equator_camera()
        p = gnomonic_inverse(cam, math.tan(math.radians(36.0)), 0.0)
        assert p.lon == pytest.approx(math.radians(36.0), abs=1e-12)
        assert p.lat == pytest.approx(0.0, abs=1e-12)

    def test_forward_inverse_round_trip_10k(self, layout):
        rng = np.random.default_rng(11)
        for cam in layout.cameras[::4]:
            x = rng.uniform(-1.2, 1.2, 10_000)
            y = rng.uniform(-1.2, 1.2, 10_000)
            lon, lat = cam.direction_from_plane(x, y)
            x2, y2, valid = cam.plane_from_direction(lon, lat)
            assert valid.all()
            assert np.abs(x2 - x).max() < 1e-10
            assert np.abs(y2 - y).max() < 1e-10

    def test_rotation_consistency(self, layout):
        rng = np.random.default_rng(5)
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        ang = 0.83
        k = np.array(
            [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
        )
        rot = np.eye(3) + math.sin(ang) * k + (1 - math.cos(ang)) * (k @ k)
        cam = layout.cameras[6]
        rcam = TangentCamera(
            face_index=cam.face_index,
            tangent_point=SphericalCoord.from_unit_vector(rot @ cam.tangent_vector),
            axis_x=rot @ cam.axis_x,
            axis_y=rot @ cam.axis_y,
            center_x=cam.center_x,
            center_y=cam.center_y,
            half_extent_x=cam.half_extent_x,
            half_extent_y=cam.half_extent_y,
            padding=cam.padding,
            width_px=cam.width_px,
            height_px=cam.height_px,
        )
        lon = rng.uniform(-math.pi, math.pi, 500)
        lat = rng.uniform(-1.2, 1.2, 500)
        dirs = np.stack(
            [np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)], axis=1
        )
        rdirs = dirs @ rot.T
        x1, y1, v1 = cam.plane_from_direction(lon, lat)
        from panodepth.geometry import unit_to_lonlat

        rlon, rlat = unit_to_lonlat(rdirs)
        x2, y2, v2 = rcam.plane_from_direction(rlon, rlat)
        assert (v1 == v2).all()
        assert np.abs(x1[v1] - x2[v1]).max() < 1e-9
        assert np.abs(y1[v1] - y2[v1]).max() < 1e-9


class TestErpConvention:
    def test_center_of_2048x1024(self):
        lon, lat = erp_pixel_to_spherical(1023.5, 511.5, 2048, 1024)
        assert abs(lon) <= math.pi / 1024
        assert abs(lat) <= math.pi / 2048

    def test_top_row_just_below_pole(self):
        _, lat = erp_pixel_to_spherical(0, 0, 2048, 1024)
        assert math.pi / 2 - math.pi / 1024 < lat < math.pi / 2

    def test_round_trip_64x32_exact(self):
        u, v = np.meshgrid(np.arange(64), np.arange(32))
        lon, lat = erp_pixel_to_spherical(u, v, 64, 32)
        u2, v2 = spherical_to_erp_pixel(lon, lat, 64, 32)
        assert np.abs(u2 - u).max() < 1e-12
        assert np.abs(v2 - v).max() < 1e-12

    def test_bad_aspect_rejected(self):
        with pytest.raises(ParameterError):
            erp_pixel_to_spherical(0, 0, 100, 60)


class TestCoverage:
    def test_padded_coverage_bounds_small_grid(self, layout):
        cov = coverage_map(layout, 512, 256)
        assert cov.min() == 2
        assert cov.max() == 5

    def test_unpadded_coverage_tiles_sphere(self):
        cov = coverage_map(build_icosahedron_layout(0.0, 400, 346), 256, 128)
        assert cov.min() >= 1

    def test_double_counting_identity(self, layout):
        cov = coverage_map(layout, 256, 128)
        per_face = [footprint_mask(c, 256, 128).sum() for c in layout.cameras]
        assert cov.sum() == sum(per_face)


class TestLayoutSerialization:
    def test_json_round_trip_and_hash(self, layout):
        d = layout.to_json_dict()
        assert len(d["cameras"]) == 20
        assert d["layout_hash"] == layout_hash(d)
        lay2 = layout_from_json_dict(d)
        assert lay2.to_json_dict()["layout_hash"] == d["layout_hash"]
        for a, b in zip(layout.cameras, lay2.cameras):
            assert a.face_index == b.face_index
            assert np.allclose(a.axis_x, b.axis_x)
            assert a.half_extent_x == b.half_extent_x

    def test_wrong_camera_count_rejected(self, layout):
        with pytest.raises(ParameterError):
            IcosahedronLayout(cameras=layout.cameras[:19])


def _equator_camera() -> TangentCamera:
    return TangentCamera(
        face_index=0,
        tangent_point=SphericalCoord(0.0, 0.0),
        axis_x=np.array([0.0, 1.0, 0.0]),
        axis_y=np.array([0.0, 0.0, 1.0]),
        center_x=0.0,
        center_y=0.0,
        half_extent_x=1.0,
        half_extent_y=1.0,
        padding=0.0,
        width_px=64,
        height_px=64,
    )
