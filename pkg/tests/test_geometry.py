"""Geometry tests: frames, the oblique surface camera, rays, rectangle tests.

The projection oracle used throughout is plain ray/plane intersection: for a
point q below the plane, the pixel it lands on must be the spot where the
line from the head to q pierces the surface.  That route never touches the
projection matrix.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import random_scene

from xrsel.geometry import (
    DEFAULT_SURFACE_HEIGHT,
    DEFAULT_SURFACE_WIDTH,
    GeometryError,
    HeadPose,
    SurfaceGeometry,
    compute_surface_camera,
    default_far,
    frustum_matrix,
    load_scene,
    point_in_surface_rect,
    project_to_surface,
    scene_from_dict,
    snap_to_plane,
    surface_frame,
    surface_ray,
    tilted_surface,
)


def ray_plane_hit(origin: np.ndarray, through: np.ndarray,
                  plane_point: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Independent oracle: where line(origin, through) pierces the plane."""
    d = through - origin
    denom = float(np.dot(normal, d))
    t = float(np.dot(normal, plane_point - origin)) / denom
    return origin + t * d


def expected_ndc(surface: SurfaceGeometry, head: HeadPose, q: np.ndarray) -> tuple[float, float]:
    hit = ray_plane_hit(head.position, q, surface.center, surface.axis_z)
    u, v, _ = surface.to_local(hit)
    return 2.0 * u / surface.width, 2.0 * v / surface.height


class TestSurfaceFrame:
    def test_canonical(self):
        s = SurfaceGeometry(center=(0, 0, 0), axis_x=(1, 0, 0), axis_z=(0, 0, 1))
        ax, ay, az = surface_frame(s)
        assert np.allclose(ay, (0, 1, 0))

    def test_permutation_right_handed(self):
        s = SurfaceGeometry(center=(0, 0, 0), axis_x=(0, 1, 0), axis_z=(1, 0, 0))
        ax, ay, az = surface_frame(s)
        assert np.allclose(ay, (0, 0, 1))
        assert np.linalg.det(np.stack([ax, ay, az])) == pytest.approx(1.0, abs=1e-12)

    def test_random_frames_right_handed(self, rng):
        for _ in range(50):
            surface, _ = random_scene(rng)
            ax, ay, az = surface_frame(surface)
            assert np.linalg.det(np.stack([ax, ay, az])) == pytest.approx(1.0, abs=1e-12)
            assert abs(np.dot(ax, ay)) < 1e-12
            assert abs(np.dot(ay, az)) < 1e-12

    def test_rejects_bad_axes(self):
        with pytest.raises(GeometryError):
            SurfaceGeometry(center=(0, 0, 0), axis_x=(2, 0, 0), axis_z=(0, 0, 1))
        with pytest.raises(GeometryError):
            SurfaceGeometry(center=(0, 0, 0), axis_x=(1, 0, 0), axis_z=(1e-3, 0, 1))
        with pytest.raises(GeometryError):
            SurfaceGeometry(center=(0, 0, 0), axis_x=(1, 0, 0), axis_z=(0, 0, 1), width=0)


class TestSurfaceCamera:
    def test_symmetric_on_axis(self):
        s = SurfaceGeometry(center=(0, 0, 0), axis_x=(1, 0, 0), axis_z=(0, 0, 1),
                            width=2, height=2)
        setup = compute_surface_camera(HeadPose(position=(0, 0, 1)), s, far=10)
        want = [(-1, -1), (1, -1), (1, 1), (-1, 1)]
        for corner, (wx, wy) in zip(s.corners(), want):
            ndc = project_to_surface(corner, setup)
            assert ndc.x == pytest.approx(wx, abs=1e-12)
            assert ndc.y == pytest.approx(wy, abs=1e-12)
            assert ndc.depth == pytest.approx(-1.0, abs=1e-12)
        center = project_to_surface((0, 0, 0), setup)
        assert (center.x, center.y) == (0.0, 0.0)

    def test_oblique_head_matches_ray_plane_oracle(self):
        s = SurfaceGeometry(center=(0, 0, 0), axis_x=(1, 0, 0), axis_z=(0, 0, 1),
                            width=2, height=2)
        head = HeadPose(position=(0.3, -0.2, 0.8))
        setup = compute_surface_camera(head, s, far=10)
        rng = np.random.default_rng(3)
        for _ in range(200):
            q = np.array([rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-3, -0.1)])
            ex, ey = expected_ndc(s, head, q)
            ndc = project_to_surface(q, setup)
            assert math.isclose(ndc.x, ex, rel_tol=1e-9, abs_tol=1e-9)
            assert math.isclose(ndc.y, ey, rel_tol=1e-9, abs_tol=1e-9)

    def test_default_surface_dimensions_accepted(self):
        s = tilted_surface(21.0)
        assert s.width == DEFAULT_SURFACE_WIDTH and s.height == DEFAULT_SURFACE_HEIGHT
        setup = compute_surface_camera(HeadPose(position=(0.0, -0.3, 0.5)), s, far=5.0)
        assert setup.near > 0

    def test_head_on_or_below_plane_rejected(self):
        s = SurfaceGeometry(center=(0, 0, 0), axis_x=(1, 0, 0), axis_z=(0, 0, 1))
        with pytest.raises(GeometryError):
            compute_surface_camera(HeadPose(position=(0, 0, 0)), s, far=10)
        with pytest.raises(GeometryError):
            compute_surface_camera(HeadPose(position=(0, 0, -0.5)), s, far=10)

    def test_far_not_beyond_near_rejected(self):
        s = SurfaceGeometry(center=(0, 0, 0), axis_x=(1, 0, 0), axis_z=(0, 0, 1))
        with pytest.raises(GeometryError):
            compute_surface_camera(HeadPose(position=(0, 0, 1)), s, far=0.5)

    def test_matrix_recompute_bit_identical(self, rng):
        for _ in range(25):
            surface, head = random_scene(rng)
            setup = compute_surface_camera(head, surface, far=default_far(setup_near(surface, head), 3.0))
            assert np.array_equal(setup.projection, setup.recompute_projection())

    def test_eye_equals_head(self, rng):
        surface, head = random_scene(rng)
        setup = compute_surface_camera(head, surface, far=100.0)
        assert np.array_equal(setup.eye, head.position)


def setup_near(surface: SurfaceGeometry, head: HeadPose) -> float:
    return surface.signed_distance(head.position)


class TestProjectToSurface:
    def test_out_of_frustum_reported_not_clamped(self):
        s = SurfaceGeometry(center=(0, 0, 0), axis_x=(1, 0, 0), axis_z=(0, 0, 1),
                            width=2, height=2)
        setup = compute_surface_camera(HeadPose(position=(0, 0, 1)), s, far=10)
        ndc = project_to_surface((5.0, 0.0, -1.0), setup)
        assert not ndc.in_frustum
        assert ndc.x > 1.0

    def test_point_at_eye_degenerate(self):
        s = SurfaceGeometry(center=(0, 0, 0), axis_x=(1, 0, 0), axis_z=(0, 0, 1))
        head = HeadPose(position=(0, 0, 1))
        setup = compute_surface_camera(head, s, far=10)
        with pytest.raises(GeometryError):
            project_to_surface((0.2, 0.3, 1.0), setup)  # in the eye plane

    def test_random_scene_oracle(self, rng):
        for _ in range(50):
            surface, head = random_scene(rng)
            setup = compute_surface_camera(head, surface, far=50.0)
            for _ in range(20):
                u = rng.uniform(-0.5, 0.5) * surface.width
                v = rng.uniform(-0.5, 0.5) * surface.height
                depth = rng.uniform(0.05, 3.0)
                q = surface.from_local(u, v) - depth * surface.axis_z
                ex, ey = expected_ndc(surface, head, q)
                ndc = project_to_surface(q, setup)
                assert math.isclose(ndc.x, ex, rel_tol=1e-9, abs_tol=1e-9)
                assert math.isclose(ndc.y, ey, rel_tol=1e-9, abs_tol=1e-9)


class TestSurfaceRay:
    def test_on_axis(self):
        ray = surface_ray((0, 0, 0), HeadPose(position=(0, 0, 1)))
        assert np.allclose(ray.direction, (0, 0, -1))
        assert np.allclose(ray.origin, (0, 0, 0))

    def test_diagonal(self):
        ray = surface_ray((0, 0, 0), HeadPose(position=(1, 0, 1)))
        assert np.allclose(ray.direction, np.array([-1, 0, -1]) / math.sqrt(2))

    def test_directions_point_below(self, rng):
        for _ in range(1000):
            surface, head = random_scene(rng)
            u = rng.uniform(-0.5, 0.5) * surface.width
            v = rng.uniform(-0.5, 0.5) * surface.height
            ray = surface_ray(surface.from_local(u, v), head)
            assert np.dot(ray.direction, surface.axis_z) < 0

    def test_sample_at_head_degenerate(self):
        with pytest.raises(GeometryError):
            surface_ray((0, 0, 1), HeadPose(position=(0, 0, 1)))


class TestPointInSurfaceRect:
    def test_center_and_offsets(self):
        s = SurfaceGeometry(center=(0, 0, 0), axis_x=(1, 0, 0), axis_z=(0, 0, 1),
                            width=1, height=1)
        eps = 1e-3
        assert point_in_surface_rect((0, 0, 0), s, eps)
        assert not point_in_surface_rect(np.array([0, 0, 2 * eps]), s, eps)

    def test_corner_inward_offset(self, rng):
        for _ in range(30):
            surface, _ = random_scene(rng)
            eps = 1e-4
            for corner_sign in [(-1, -1), (1, -1), (1, 1), (-1, 1)]:
                u = corner_sign[0] * (0.5 * surface.width - 1e-9)
                v = corner_sign[1] * (0.5 * surface.height - 1e-9)
                p = surface.from_local(u, v)
                # brute-force local-coordinate check
                d = p - surface.center
                bu = np.dot(d, surface.axis_x)
                bv = np.dot(d, surface.axis_y)
                expect = abs(bu) <= 0.5 * surface.width and abs(bv) <= 0.5 * surface.height
                assert point_in_surface_rect(p, surface, eps) == expect

    def test_outside_rect(self):
        s = SurfaceGeometry(center=(0, 0, 0), axis_x=(1, 0, 0), axis_z=(0, 0, 1),
                            width=1, height=1)
        assert not point_in_surface_rect((0.51, 0, 0), s, 1e-3)


class TestFishtankProperty:
    def test_colinearity_many_random_configs(self, rng):
        # the world point on the plane matching NDC(q) must lie on segment(head, q)
        for _ in range(300):
            surface, head = random_scene(rng)
            setup = compute_surface_camera(head, surface, far=100.0)
            q = surface.from_local(rng.uniform(-0.5, 0.5) * surface.width,
                                   rng.uniform(-0.5, 0.5) * surface.height) \
                - rng.uniform(0.05, 5.0) * surface.axis_z
            ndc = project_to_surface(q, setup)
            on_plane = surface.from_local(ndc.x * 0.5 * surface.width,
                                          ndc.y * 0.5 * surface.height)
            oracle = ray_plane_hit(head.position, q, surface.center, surface.axis_z)
            assert np.linalg.norm(on_plane - oracle) <= 1e-9 * max(1.0, np.linalg.norm(oracle))


class TestFrustumMatrix:
    def test_bad_params(self):
        with pytest.raises(GeometryError):
            frustum_matrix(-1, 1, -1, 1, 0.0, 10.0)
        with pytest.raises(GeometryError):
            frustum_matrix(-1, 1, -1, 1, 1.0, 1.0)
        with pytest.raises(GeometryError):
            frustum_matrix(1, -1, -1, 1, 1.0, 10.0)

    def test_depth_range(self):
        s = SurfaceGeometry(center=(0, 0, 0), axis_x=(1, 0, 0), axis_z=(0, 0, 1),
                            width=2, height=2)
        setup = compute_surface_camera(HeadPose(position=(0, 0, 1)), s, far=11.0)
        near_pt = project_to_surface((0, 0, 0), setup)
        far_pt = project_to_surface((0, 0, -10.0), setup)
        assert near_pt.depth == pytest.approx(-1.0, abs=1e-12)
        assert far_pt.depth == pytest.approx(1.0, abs=1e-12)


class TestSceneConfig:
    def test_round_trip(self, tmp_path):
        doc = {
            "surface": {"center": [0, 0, 0], "axis_x": [1, 0, 0], "axis_z": [0, 0, 1],
                        "width": 0.637, "height": 0.438},
            "head": {"position": [0.1, -0.2, 0.6]},
            "far": 8.0,
        }
        path = tmp_path / "scene.json"
        path.write_text(__import__("json").dumps(doc))
        surface, head, far = load_scene(path)
        assert surface.width == 0.637
        assert np.allclose(head.position, (0.1, -0.2, 0.6))
        assert far == 8.0

    def test_missing_field(self):
        with pytest.raises(GeometryError):
            scene_from_dict({"surface": {"center": [0, 0, 0]}})

    def test_snap_to_plane(self, rng):
        surface, _ = random_scene(rng)
        p = surface.center + 0.3 * surface.axis_z + 0.1 * surface.axis_x
        snapped = snap_to_plane(p, surface)
        assert abs(surface.signed_distance(snapped)) < 1e-12
