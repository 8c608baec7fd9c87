import json
import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from graspvis import (
    ContractViolation,
    FrameId,
    Intrinsics,
    Pose,
    compose,
    deproject_pixel,
    project_point,
    rotation_about,
    transform_point,
    transform_points,
)
from conftest import VGA, small_intrinsics


class TestIntrinsics:
    def test_json_roundtrip_is_exact(self):
        again = Intrinsics.from_json(VGA.to_json())
        assert again == VGA

    def test_json_is_stable(self):
        assert VGA.to_json() == VGA.to_json()
        assert json.loads(VGA.to_json())["depth_scale"] == 0.001

    def test_default_depth_scale_is_millimeters(self):
        assert VGA.depth_scale == 0.001

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(width=0),
            dict(height=-1),
            dict(fx=0.0),
            dict(fy=-2.0),
            dict(cx=640.0),  # principal point must be inside the image
            dict(cy=-0.5),
            dict(depth_scale=0.0),
        ],
    )
    def test_invalid_values_rejected(self, kwargs):
        base = dict(width=640, height=480, fx=600.0, fy=600.0, cx=320.0, cy=240.0)
        base.update(kwargs)
        with pytest.raises(ContractViolation):
            Intrinsics(**base)


class TestDeprojection:
    def test_principal_point_maps_to_optical_axis(self):
        i = Intrinsics(width=640, height=480, fx=500.0, fy=400.0, cx=320.0, cy=240.0)
        p = deproject_pixel(i, 320, 240, 1500)
        assert np.allclose(p, [0.0, 0.0, 1.5])

    def test_hand_computed_pixel(self):
        # x = (u - cx) * z / fx, y = (v - cy) * z / fy, z = raw * scale
        i = Intrinsics(width=640, height=480, fx=500.0, fy=250.0, cx=320.0, cy=240.0)
        p = deproject_pixel(i, 420, 140, 2000)
        assert np.allclose(p, [(420 - 320) * 2.0 / 500.0, (140 - 240) * 2.0 / 250.0, 2.0])
        assert np.allclose(p, [0.4, -0.8, 2.0])

    def test_depth_scale_participates(self):
        i = Intrinsics(width=64, height=48, fx=60.0, fy=60.0, cx=32.0, cy=24.0,
                       depth_scale=0.0005)
        p = deproject_pixel(i, 32, 24, 2000)
        assert np.isclose(p[2], 1.0)

    def test_project_inverts_deproject(self, rng):
        i = VGA
        for _ in range(300):
            u = int(rng.integers(0, i.width))
            v = int(rng.integers(0, i.height))
            raw = int(rng.integers(1, 60000))
            point = deproject_pixel(i, u, v, raw)
            u2, v2, raw2 = project_point(i, point)
            assert np.isclose(u2, u, atol=1e-9)
            assert np.isclose(v2, v, atol=1e-9)
            assert raw2 == raw

    def test_out_of_bounds_pixel_rejected(self):
        with pytest.raises(ContractViolation):
            deproject_pixel(VGA, 640, 0, 100)
        with pytest.raises(ContractViolation):
            deproject_pixel(VGA, -1, 0, 100)

    def test_nonpositive_depth_rejected(self):
        with pytest.raises(ContractViolation):
            deproject_pixel(VGA, 10, 10, 0)


class TestRotationAbout:
    def test_matches_scipy_rotvec(self, rng):
        for _ in range(50):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            angle = rng.uniform(-2 * math.pi, 2 * math.pi)
            ours = rotation_about(axis, angle)
            ref = Rotation.from_rotvec(axis * angle).as_matrix()
            assert np.allclose(ours, ref, atol=1e-12)

    def test_quarter_turn_about_z(self):
        r = rotation_about([0, 0, 1], math.pi / 2)
        assert np.allclose(r @ [1, 0, 0], [0, 1, 0], atol=1e-12)

    def test_zero_axis_rejected(self):
        with pytest.raises(ContractViolation):
            rotation_about([0, 0, 0], 1.0)


class TestPose:
    def test_non_orthonormal_rotation_rejected(self):
        bad = np.eye(3)
        bad[0, 1] = 1e-6
        with pytest.raises(ContractViolation):
            Pose(bad, np.zeros(3), from_frame=FrameId.CAMERA, to_frame=FrameId.WORLD)

    def test_reflection_rejected(self):
        flip = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(ContractViolation):
            Pose(flip, np.zeros(3), from_frame=FrameId.CAMERA, to_frame=FrameId.WORLD)

    def test_translation_only_composition(self):
        a = Pose(np.eye(3), [0.5, 0, 0], from_frame=FrameId.BODY, to_frame=FrameId.WORLD)
        b = Pose(np.eye(3), [1.0, 0, 0], from_frame=FrameId.CAMERA, to_frame=FrameId.BODY)
        ab = compose(a, b)
        assert np.allclose(ab.translation, [1.5, 0, 0])
        assert ab.from_frame == FrameId.CAMERA
        assert ab.to_frame == FrameId.WORLD

    def test_frame_mismatch_rejected(self):
        a = Pose(np.eye(3), np.zeros(3), from_frame=FrameId.BODY, to_frame=FrameId.WORLD)
        b = Pose(np.eye(3), np.zeros(3), from_frame=FrameId.BODY, to_frame=FrameId.WORLD)
        with pytest.raises(ContractViolation):
            compose(a, b)

    def test_inverse_composes_to_identity(self, rng):
        for _ in range(50):
            r = Rotation.random(random_state=int(rng.integers(1 << 31))).as_matrix()
            t = rng.normal(size=3)
            p = Pose(r, t, from_frame=FrameId.CAMERA, to_frame=FrameId.WORLD)
            ident = compose(p, p.inverse())
            assert np.allclose(ident.rotation, np.eye(3), atol=1e-12)
            assert np.allclose(ident.translation, 0.0, atol=1e-12)
            assert ident.from_frame == ident.to_frame == FrameId.WORLD

    def test_compose_matches_sequential_application(self, rng):
        r1 = Rotation.random(random_state=7).as_matrix()
        r2 = Rotation.random(random_state=8).as_matrix()
        a = Pose(r1, [0.1, -0.2, 0.3], from_frame=FrameId.BODY, to_frame=FrameId.WORLD)
        b = Pose(r2, [1.0, 2.0, -0.5], from_frame=FrameId.CAMERA, to_frame=FrameId.BODY)
        x = rng.normal(size=3)
        assert np.allclose(
            transform_point(compose(a, b), x),
            transform_point(a, transform_point(b, x)),
            atol=1e-12,
        )

    def test_transform_points_matches_pointwise(self, rng):
        p = Pose(rotation_about([0, 1, 0], 0.7), [0.2, 0.0, -1.0],
                 from_frame=FrameId.CAMERA, to_frame=FrameId.BODY)
        xs = rng.normal(size=(40, 3))
        batch = transform_points(p, xs)
        for k in range(len(xs)):
            assert np.allclose(batch[k], transform_point(p, xs[k]), atol=1e-12)

    def test_rotation_is_read_only(self):
        p = Pose(np.eye(3), np.zeros(3), from_frame=FrameId.BODY, to_frame=FrameId.WORLD)
        with pytest.raises(ValueError):
            p.rotation[0, 0] = 2.0

    def test_identity_helper(self):
        p = Pose.identity(FrameId.CAMERA, FrameId.BODY)
        assert np.allclose(p.rotation, np.eye(3))
        assert np.allclose(p.translation, 0.0)


class TestCameraWorldConvention:
    def test_nominal_orientation_maps_optical_axis_to_world_x(self):
        # camera z (forward) -> world +x, camera x (right) -> world -y,
        # camera y (down) -> world -z
        from graspvis import camera_pose_at

        pose = camera_pose_at((-1.0, 0.0, 0.0))
        assert np.allclose(pose.rotation @ [0, 0, 1], [1, 0, 0])
        assert np.allclose(pose.rotation @ [1, 0, 0], [0, -1, 0])
        assert np.allclose(pose.rotation @ [0, 1, 0], [0, 0, -1])
        assert pose.from_frame == FrameId.CAMERA
        assert pose.to_frame == FrameId.WORLD
