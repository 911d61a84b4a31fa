"""Cameras, projection, view rings, and SDF primitives."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meshlift import geometry as geo


def axis_camera(dist=2.0, width=64, height=64):
    """Camera on the +z axis looking at the origin."""
    return geo.camera_from_angles(0.0, 0.0, dist, width, height)


class TestProjection:
    def test_optical_axis_point(self):
        cam = axis_camera(dist=2.0)
        uv, depth = geo.project(cam, np.array([0.0, 0.0, 0.0]))
        assert depth == pytest.approx(2.0)
        assert uv[0] == pytest.approx(cam.cx)
        assert uv[1] == pytest.approx(cam.cy)

    def test_pinhole_formula(self):
        rot = np.eye(3)
        cam = geo.Camera(fx=100.0, fy=100.0, cx=32.0, cy=32.0,
                         rotation=rot, translation=np.zeros(3), width=64, height=64)
        uv, depth = geo.project(cam, np.array([0.1, 0.0, 1.0]))
        assert depth == pytest.approx(1.0)
        assert uv[0] == pytest.approx(42.0)
        assert uv[1] == pytest.approx(32.0)

    def test_project_unproject_round_trip(self):
        cam = geo.camera_from_angles(40.0, 25.0, 2.5)
        rng = np.random.default_rng(0)
        pts = rng.uniform(-0.8, 0.8, size=(20, 3))
        uv, depth = geo.project(cam, pts)
        back = geo.unproject(cam, uv, depth)
        np.testing.assert_allclose(back, pts, atol=1e-6)

    def test_behind_camera_flagged(self):
        cam = axis_camera(dist=2.0)
        _, depth = geo.project(cam, np.array([0.0, 0.0, 5.0]))  # behind (z > cam)
        assert depth <= 0

    def test_rigid_equivariance(self):
        # Rotating camera and point by the same rigid motion keeps (uv, depth).
        cam = geo.camera_from_angles(30.0, 10.0, 2.5)
        rng = np.random.default_rng(1)
        pts = rng.uniform(-0.5, 0.5, size=(10, 3))
        uv0, d0 = geo.project(cam, pts)
        rot = geo.random_rotation(rng)
        cam2 = geo.Camera(fx=cam.fx, fy=cam.fy, cx=cam.cx, cy=cam.cy,
                          rotation=cam.rotation @ rot.T, translation=cam.translation,
                          width=cam.width, height=cam.height)
        uv1, d1 = geo.project(cam2, pts @ rot.T)
        np.testing.assert_allclose(uv1, uv0, atol=1e-9)
        np.testing.assert_allclose(d1, d0, atol=1e-9)

    def test_invalid_rotation_rejected(self):
        with pytest.raises(ValueError, match="orthonormal"):
            geo.Camera(fx=10, fy=10, cx=8, cy=8, rotation=np.eye(3) * 2,
                       translation=np.zeros(3), width=16, height=16)


class TestViewRings:
    def test_single_front_camera(self):
        vs = geo.make_ring_views(1, [0.0], [0.0], 2.0)
        pos = vs.cameras[0].position
        np.testing.assert_allclose(pos, [0.0, 0.0, 2.0], atol=1e-12)

    def test_default_preset_valid(self):
        vs = geo.training_viewset(radius=2.5)
        assert len(vs) == 7
        assert vs.reference_index == 0
        for cam in vs.cameras:
            np.testing.assert_allclose(np.linalg.norm(cam.position), 2.5, atol=1e-9)
            # All cameras aim at the origin: forward axis hits the origin.
            fwd = cam.rotation[2]
            np.testing.assert_allclose(cam.position + 2.5 * fwd, np.zeros(3), atol=1e-9)

    def test_opposite_azimuths_antipodal(self):
        vs = geo.make_ring_views(2, [0.0, 180.0], [0.0, 0.0], 2.0)
        p0 = vs.cameras[0].position
        p1 = vs.cameras[1].position
        np.testing.assert_allclose(p0, -p1, atol=1e-9)

    def test_radius_inside_sphere_rejected(self):
        with pytest.raises(ValueError, match="radius"):
            geo.make_ring_views(1, [0.0], [0.0], 0.9)

    def test_manifest_round_trip(self):
        vs = geo.training_viewset(radius=2.5, ref_azimuth=15.0)
        text = vs.to_manifest()
        back = geo.ViewSet.from_manifest(text)
        assert len(back) == len(vs)
        for a, b in zip(vs.cameras, back.cameras):
            np.testing.assert_allclose(a.position, b.position, atol=1e-9)
            assert (a.fx, a.fy, a.cx, a.cy) == (b.fx, b.fy, b.cx, b.cy)


class TestUniformSphere:
    def test_two_views_widely_separated(self):
        cams = geo.uniform_view_sphere(2, 2.0)
        d0 = cams[0].position / 2.0
        d1 = cams[1].position / 2.0
        angle = np.rad2deg(np.arccos(np.clip(d0 @ d1, -1, 1)))
        assert angle > 90.0

    def test_positions_on_sphere(self):
        cams = geo.uniform_view_sphere(16, 2.5)
        for cam in cams:
            assert np.linalg.norm(cam.position) == pytest.approx(2.5, abs=1e-9)

    def test_min_pairwise_separation_32(self):
        cams = geo.uniform_view_sphere(32, 2.5)
        dirs = np.stack([c.position / 2.5 for c in cams])
        cosm = dirs @ dirs.T
        np.fill_diagonal(cosm, -1.0)
        min_angle = np.rad2deg(np.arccos(np.clip(cosm.max(), -1, 1)))
        assert min_angle > 18.0


class TestBoundingSphere:
    def test_min_depth_value(self):
        cam = axis_camera(dist=2.5)
        assert geo.bounding_sphere_min_depth(cam, 1.0) == pytest.approx(1.5)

    def test_near_limit(self):
        cam = axis_camera(dist=1.0 + 1e-3)
        assert geo.bounding_sphere_min_depth(cam, 1.0) == pytest.approx(1e-3, rel=1e-6)

    def test_camera_inside_rejected(self):
        cam = axis_camera(dist=1.5)
        with pytest.raises(ValueError, match="inside"):
            geo.bounding_sphere_min_depth(cam, 2.0)

    def test_visible_depths_respect_min_depth(self):
        # Any point inside the unit sphere projects with depth >= d_min.
        cam = geo.camera_from_angles(75.0, -15.0, 2.5)
        dmin = geo.bounding_sphere_min_depth(cam, 1.0)
        rng = np.random.default_rng(2)
        pts = rng.standard_normal((500, 3))
        pts = pts / np.linalg.norm(pts, axis=1, keepdims=True) * rng.uniform(0, 1, (500, 1))
        _, depth = geo.project(cam, pts)
        assert (depth >= dmin - 1e-9).all()


class TestShapes:
    def test_unit_sphere_inside_outside(self):
        s = geo.ShapeSDF(geo.Sphere(radius=1.0))
        assert s.eval(np.zeros(3)) == pytest.approx(-1.0)
        assert s.eval(np.array([2.0, 0.0, 0.0])) == pytest.approx(1.0)

    def test_union_is_min(self):
        a = geo.Sphere(pose=geo.Pose(center=np.array([0.3, 0, 0])), radius=0.4, part_id=0)
        b = geo.Sphere(pose=geo.Pose(center=np.array([-0.3, 0, 0])), radius=0.5, part_id=1)
        u = geo.ShapeSDF(geo.Union(children=(a, b)))
        rng = np.random.default_rng(3)
        pts = rng.uniform(-1, 1, size=(100, 3))
        expect = np.minimum(geo.ShapeSDF(a).eval(pts), geo.ShapeSDF(b).eval(pts))
        np.testing.assert_allclose(u.eval(pts), expect, atol=1e-12)

    def test_primitives_match_closed_forms(self):
        rng = np.random.default_rng(4)
        pts = rng.uniform(-1.2, 1.2, size=(1000, 3))
        sphere = geo.ShapeSDF(geo.Sphere(radius=0.7))
        np.testing.assert_allclose(sphere.eval(pts),
                                   np.linalg.norm(pts, axis=1) - 0.7, atol=1e-12)
        he = np.array([0.5, 0.3, 0.4])
        box = geo.ShapeSDF(geo.Box(half_extents=he))
        q = np.abs(pts) - he
        expect = np.linalg.norm(np.maximum(q, 0), axis=1) + np.minimum(q.max(axis=1), 0)
        np.testing.assert_allclose(box.eval(pts), expect, atol=1e-12)
        cap = geo.ShapeSDF(geo.Capsule(half_length=0.4, radius=0.25))
        pc = pts.copy()
        pc[:, 1] -= np.clip(pc[:, 1], -0.4, 0.4)
        np.testing.assert_allclose(cap.eval(pts),
                                   np.linalg.norm(pc, axis=1) - 0.25, atol=1e-12)

    def test_gradient_norm_sane_for_compositions(self):
        rng = np.random.default_rng(5)
        children = (
            geo.Sphere(pose=geo.Pose(center=np.array([0.25, 0, 0])), radius=0.4),
            geo.Superellipsoid(pose=geo.Pose(center=np.array([-0.2, 0.1, 0])),
                               half_extents=np.array([0.35, 0.25, 0.3]), power=4.0),
            geo.Capsule(pose=geo.Pose(rotation=geo.random_rotation(rng)),
                        half_length=0.3, radius=0.15),
        )
        shape = geo.ShapeSDF(geo.SmoothUnion(children=children, k=0.08))
        pts = rng.uniform(-0.9, 0.9, size=(400, 3))
        child_d = np.stack([geo.ShapeSDF(c).eval(pts) for c in children])
        child_d.sort(axis=0)
        off_crease = (child_d[1] - child_d[0]) > 3 * 0.08  # blend band excluded
        g = shape.gradient(pts[off_crease])
        norms = np.linalg.norm(g, axis=1)
        assert norms.min() > 0.5 and norms.max() < 2.0

    def test_smooth_union_bound_correct(self):
        a = geo.Sphere(radius=0.4)
        b = geo.Sphere(pose=geo.Pose(center=np.array([0.5, 0, 0])), radius=0.4)
        su = geo.ShapeSDF(geo.SmoothUnion(children=(a, b), k=0.1))
        rng = np.random.default_rng(6)
        pts = rng.uniform(-1, 1, size=(500, 3))
        dmin = np.minimum(geo.ShapeSDF(a).eval(pts), geo.ShapeSDF(b).eval(pts))
        d = su.eval(pts)
        assert (d <= dmin + 1e-9).all()
        assert (d >= dmin - 0.1 - 1e-9).all()


@settings(max_examples=30, deadline=None)
@given(st.floats(10, 350), st.floats(-80, 80), st.floats(1.5, 5.0))
def test_orbit_cameras_look_at_origin(az, el, radius):
    cam = geo.camera_from_angles(az, el, radius)
    uv, depth = geo.project(cam, np.zeros(3))
    assert depth == pytest.approx(radius, rel=1e-9)
    assert uv[0] == pytest.approx(cam.cx, abs=1e-6)
    assert uv[1] == pytest.approx(cam.cy, abs=1e-6)
