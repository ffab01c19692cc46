import math

import numpy as np
import pytest

from physweave.errors import GeometryError
from physweave.camera import (CameraPose, camera_init, camera_motion_pose,
                              focal_px, project_points, rasterize)

from conftest import box_mesh


@pytest.fixture
def front_camera():
    return CameraPose(position=[0.0, -3.0, 0.5], look_at=[0.0, 0.0, 0.5],
                      fov_deg=45.0)


class TestProjection:
    def test_matches_analytic_pinhole(self, front_camera):
        # camera looks along +y from (0,-3,0.5): x maps to +u, z to -v
        size = 256
        fl = (size / 2.0) / math.tan(math.radians(45.0) / 2.0)
        pts = np.array([[0.5, 0.0, 1.0], [-0.5, 0.0, 0.0], [0.2, 1.0, 0.7]])
        expected = []
        for x, y, z in pts:
            depth = y + 3.0
            expected.append([128.0 + fl * x / depth,
                             128.0 - fl * (z - 0.5) / depth])
        px, pz = project_points(front_camera, pts, size, size)
        assert np.allclose(px, expected, atol=1e-9)
        assert np.allclose(pz, pts[:, 1] + 3.0)

    def test_focal_from_fov(self):
        assert np.isclose(focal_px(90.0, 200), 100.0)

    def test_raster_matches_projection_within_half_pixel(self, front_camera):
        size = 256
        cube = box_mesh(center=(0, 0, 0.5))
        res = rasterize([cube], front_camera, size, ground=False,
                        shadows=False)
        px, _ = project_points(front_camera, cube.vertices, size, size)
        ys, xs = np.nonzero(res.seg >= 2)
        # pixel-center coverage bbox vs projected silhouette bbox
        assert xs.min() + 0.5 >= px[:, 0].min() - 0.5
        assert xs.max() + 0.5 <= px[:, 0].max() + 0.5
        assert ys.min() + 0.5 >= px[:, 1].min() - 0.5
        assert ys.max() + 0.5 <= px[:, 1].max() + 0.5

    def test_centered_cube_hits_principal_point(self, front_camera):
        res = rasterize([box_mesh(center=(0, 0, 0.5))], front_camera, 256,
                        ground=False, shadows=False)
        ys, xs = np.nonzero(res.seg >= 2)
        assert abs((xs.mean() + 0.5) - 128.0) < 1.0
        assert abs((ys.mean() + 0.5) - 128.0) < 1.0


class TestRasterize:
    def test_looking_away_gives_empty_mask(self):
        cam = CameraPose([0, -3, 0.5], [0, -6, 0.5], 45.0)
        res = rasterize([box_mesh(center=(0, 0, 0.5))], cam, 64,
                        ground=False)
        assert res.mask.values.sum() == 0

    def test_occlusion_keeps_nearer_id(self, front_camera):
        near = box_mesh(center=(0, 0, 0.5), object_id=2)
        far = box_mesh(center=(0, 2.0, 0.5), size=(2, 1, 2), object_id=3)
        res = rasterize([far, near], front_camera, 128, ground=False,
                        shadows=False)
        assert res.seg[64, 64] == 2
        assert (res.seg == 3).any()  # far box visible around the near one

    def test_camera_inside_geometry_is_valid(self):
        cam = CameraPose([0, 0, 0.5], [0, 1, 0.5], 45.0)
        big = box_mesh(center=(0, 0, 0.5), size=(4, 4, 4))
        res = rasterize([big], cam, 64, ground=False, shadows=False)
        assert np.isfinite(res.frame.rgb).all()

    def test_seg_scheme_and_shadow_signal(self, front_camera):
        res = rasterize([box_mesh(center=(0, 0, 0.5))], front_camera, 256)
        assert set(np.unique(res.seg)) >= {0, 1, 2}
        ground_px = res.seg == 1
        brightness = res.frame.rgb.mean(axis=2)
        assert (brightness[ground_px] < 0.3).any()  # planar shadow present
        assert np.array_equal(res.mask.values, (res.seg >= 2).astype(float))

    def test_particle_splats(self, front_camera):
        pts = np.array([[0.0, 0.0, 0.5], [0.1, 0.0, 0.5]])
        res = rasterize([], front_camera, 128,
                        point_sets=[(pts, 4, np.array([1.0, 0, 0]), 0.02)],
                        ground=False, shadows=False)
        assert (res.seg == 4).sum() > 0


class TestCameraMotion:
    def test_frame_zero_is_base(self, front_camera):
        for mode in ("orbit_xy_cw", "orbit_xy_ccw", "orbit_yz_cw",
                     "orbit_yz_ccw", "lateral", "descent"):
            pose = camera_motion_pose(mode, 0, front_camera)
            assert np.array_equal(pose.position, front_camera.position)

    def test_orbit_ccw_azimuth_and_radius(self, front_camera):
        pose = camera_motion_pose("orbit_xy_ccw", 100, front_camera)
        rel0 = front_camera.position - front_camera.look_at
        rel1 = pose.position - pose.look_at
        assert abs(np.linalg.norm(rel1) - np.linalg.norm(rel0)) < 1e-9
        az0 = math.atan2(rel0[1], rel0[0])
        az1 = math.atan2(rel1[1], rel1[0])
        assert np.isclose(az1 - az0, 0.1, atol=1e-12)

    def test_cw_ccw_compose_to_identity(self, front_camera):
        k = 137
        cw = camera_motion_pose("orbit_xy_cw", k, front_camera)
        back = camera_motion_pose("orbit_xy_ccw", k, cw)
        assert np.allclose(back.position, front_camera.position, atol=1e-9)

    def test_orbit_yz_preserves_distance(self, front_camera):
        pose = camera_motion_pose("orbit_yz_ccw", 250, front_camera)
        assert np.isclose(np.linalg.norm(pose.position - pose.look_at),
                          np.linalg.norm(front_camera.position
                                         - front_camera.look_at), atol=1e-9)

    def test_lateral_and_descent_frame_linear(self, front_camera):
        for mode in ("lateral", "descent"):
            d1 = camera_motion_pose(mode, 50, front_camera).position \
                - front_camera.position
            d2 = camera_motion_pose(mode, 100, front_camera).position \
                - front_camera.position
            assert np.allclose(d2, 2.0 * d1, atol=1e-12)
        descent = camera_motion_pose("descent", 100, front_camera)
        assert descent.position[2] < front_camera.position[2]

    def test_look_at_fixed(self, front_camera):
        for mode in ("orbit_xy_ccw", "lateral", "descent"):
            pose = camera_motion_pose(mode, 77, front_camera)
            assert np.array_equal(pose.look_at, front_camera.look_at)

    def test_unknown_mode(self, front_camera):
        with pytest.raises(GeometryError, match="unknown camera mode"):
            camera_motion_pose("barrel_roll", 1, front_camera)


class TestCameraInit:
    def test_scene_framed(self):
        meshes = [box_mesh(center=(0, 0, 0.5)),
                  box_mesh(center=(1.2, 0.3, 0.25), size=(0.5, 0.5, 0.5))]
        pose = camera_init(meshes)
        res = rasterize(meshes, pose, 128, ground=False, shadows=False)
        frac = res.mask.values.mean()
        assert 0.05 < frac < 0.9  # visible, neither tiny nor clipped
        assert pose.position[2] > pose.look_at[2]  # slightly elevated

    def test_deterministic(self):
        meshes = [box_mesh(center=(0, 0, 0.5))]
        a = camera_init(meshes)
        b = camera_init(meshes)
        assert np.array_equal(a.position, b.position)

    def test_pose_validation(self):
        with pytest.raises(GeometryError):
            CameraPose([0, 0, 0], [0, 0, 0], 45.0)
        with pytest.raises(GeometryError):
            CameraPose([0, 0, 1], [0, 0, 0], 0.5)
