import json

import numpy as np
import pytest

from graspvis import (
    ContractViolation,
    FrameId,
    GraspAssumptions,
    GraspPlan,
    GripperApertureExceeded,
    NoValidGrasp,
    PointCloud,
    Pose,
    centroid,
    mirror_about_axis,
    plan_grasp,
    plan_to_json_dict,
    principal_axis,
    read_ply,
    transform_plan,
    write_plan,
)
from conftest import full_cylinder_lattice, half_cylinder_shell, random_cloud


class TestCentroid:
    def test_matches_mean(self, rng):
        c = random_cloud(rng, n=77)
        assert np.allclose(centroid(c), c.points.mean(axis=0), atol=1e-15)

    def test_empty_rejected(self):
        with pytest.raises(ContractViolation):
            centroid(PointCloud(np.zeros((0, 3))))


class TestPrincipalAxis:
    def test_recovers_known_direction(self, rng):
        v = np.array([2.0, -1.0, 3.0])
        v /= np.linalg.norm(v)
        t = np.linspace(-1, 1, 60)
        jitter = rng.normal(0, 1e-4, (60, 3))
        jitter -= np.outer(jitter @ v, v)  # keep noise perpendicular so v stays dominant
        axis = principal_axis(PointCloud(np.outer(t, v) + jitter))
        assert abs(abs(axis @ v) - 1.0) < 1e-6

    def test_sign_makes_largest_component_positive(self, rng):
        for _ in range(10):
            axis = principal_axis(random_cloud(rng, n=40, scale=0.1))
            assert axis[np.argmax(np.abs(axis))] > 0

    def test_unit_norm(self, rng):
        axis = principal_axis(random_cloud(rng, n=25))
        assert abs(np.linalg.norm(axis) - 1.0) < 1e-12

    def test_permutation_invariant(self, rng):
        c = random_cloud(rng, n=50)
        perm = rng.permutation(50)
        a = principal_axis(c)
        b = principal_axis(PointCloud(c.points[perm]))
        assert np.allclose(a, b, atol=1e-9)

    def test_too_few_points(self):
        with pytest.raises(ContractViolation):
            principal_axis(PointCloud(np.zeros((2, 3)) + [[0, 0, 1], [0, 1, 1]]))

    def test_isotropic_tie_prefers_world_z(self, rng):
        # a perfect cube of points has three equal eigenvalues
        g = np.linspace(-1, 1, 5)
        pts = np.array([[x, y, z] for x in g for y in g for z in g])
        axis = principal_axis(PointCloud(pts))
        assert np.allclose(axis, [0, 0, 1], atol=1e-9)


class TestMirrorAboutAxis:
    def test_involution(self, rng):
        c = random_cloud(rng, n=80, colors=True)
        axis = np.array([0.0, 1.0, 0.0])
        pivot = np.array([0.1, -0.2, 1.0])
        twice = mirror_about_axis(mirror_about_axis(c, axis, pivot), axis, pivot)
        assert np.allclose(twice.points, c.points, atol=1e-12)
        assert np.array_equal(twice.colors, c.colors)

    def test_isometry(self, rng):
        c = random_cloud(rng, n=40)
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        m = mirror_about_axis(c, axis, rng.normal(size=3))
        before = np.linalg.norm(c.points[:, None] - c.points[None, :], axis=2)
        after = np.linalg.norm(m.points[:, None] - m.points[None, :], axis=2)
        assert np.allclose(before, after, atol=1e-9)

    def test_points_on_axis_are_fixed(self):
        axis = np.array([0.0, 0.0, 1.0])
        pivot = np.array([0.5, 0.5, 0.0])
        on_axis = pivot + np.outer(np.linspace(-2, 2, 9), axis)
        m = mirror_about_axis(PointCloud(on_axis), axis, pivot)
        assert np.allclose(m.points, on_axis, atol=1e-12)

    def test_known_quarter_case(self):
        # point one unit along x from a z-axis pivot lands one unit along -x
        m = mirror_about_axis(PointCloud(np.array([[1.0, 0.0, 0.0]])),
                              np.array([0.0, 0.0, 1.0]), np.zeros(3))
        assert np.allclose(m.points[0], [-1.0, 0.0, 0.0], atol=1e-12)

    def test_non_unit_axis_rejected(self, rng):
        with pytest.raises(ContractViolation):
            mirror_about_axis(random_cloud(rng, n=4), np.array([0.0, 2.0, 0.0]), np.zeros(3))


class TestPlanGrasp:
    def test_half_shell_recovers_true_center(self):
        # visible half of a cylinder at (0, 0, 1.2); the raw centroid sits
        # 2r/pi in front of the axis, the plan centroid must not
        shell = half_cylinder_shell(radius=0.04, standoff=1.2)
        plan = plan_grasp(shell)
        true_center = np.array([0.0, 0.0, 1.2])
        raw_err = abs(centroid(shell)[2] - 1.2)
        assert raw_err > 0.02  # the bias the mirroring is there to fix
        assert np.linalg.norm(plan.centroid - true_center) < 1e-4
        assert abs(plan.centroid[2] - 1.2) < raw_err

    def test_half_shell_recovers_axis(self):
        plan = plan_grasp(half_cylinder_shell())
        assert abs(abs(plan.axis @ np.array([0.0, 1.0, 0.0])) - 1.0) < 1e-9

    def test_wrapped_cloud_centroid_unmoved(self):
        # a cloud that already covers the full surface gains nothing from
        # the duplication: combined centroid equals the plain centroid
        lattice = full_cylinder_lattice()
        plan = plan_grasp(lattice)
        assert np.allclose(plan.centroid, centroid(lattice), atol=1e-12)

    def test_candidates_inside_slab(self):
        plan = plan_grasp(half_cylinder_shell())
        proj = np.abs((plan.candidates.points - plan.centroid) @ plan.axis)
        assert np.all(proj <= plan.slab_thickness / 2 + 1e-12)
        assert len(plan.candidates) > 0

    def test_custom_slab_thickness(self):
        thick = plan_grasp(half_cylinder_shell(), slab_thickness=0.1)
        thin = plan_grasp(half_cylinder_shell(), slab_thickness=0.012)
        assert thick.slab_thickness == 0.1
        assert len(thick.candidates) > len(thin.candidates)

    def test_source_count_is_input_size(self):
        shell = half_cylinder_shell()
        assert plan_grasp(shell).source_count == len(shell)

    def test_wide_object_exceeds_aperture(self):
        fat = full_cylinder_lattice(radius=0.15, height=1.0)
        with pytest.raises(GripperApertureExceeded):
            plan_grasp(fat)

    def test_aperture_threshold_configurable(self):
        fat = full_cylinder_lattice(radius=0.15, height=1.0)
        plan = plan_grasp(fat, GraspAssumptions(max_extent=0.4))
        assert len(plan.candidates) > 0

    def test_hollow_middle_has_no_valid_grasp(self):
        # two rings far apart along the axis leave the cutting slab empty
        theta = np.linspace(0, 2 * np.pi, 36, endpoint=False)
        ring = np.column_stack(
            [0.04 * np.sin(theta), np.zeros_like(theta), -0.04 * np.cos(theta)]
        )
        pts = np.vstack([ring + [0, -0.5, 1.2], ring + [0, 0.5, 1.2]])
        with pytest.raises(NoValidGrasp):
            plan_grasp(PointCloud(pts))

    def test_bad_slab_rejected(self):
        with pytest.raises(ContractViolation):
            plan_grasp(half_cylinder_shell(), slab_thickness=0.0)


class TestGraspPlanValidation:
    def test_axis_must_be_unit(self):
        c = PointCloud(np.zeros((1, 3)))
        with pytest.raises(ContractViolation):
            GraspPlan(np.zeros(3), np.array([0.0, 0.0, 2.0]), c, 0.025, 1)

    def test_candidate_outside_slab_rejected(self):
        c = PointCloud(np.array([[0.0, 0.0, 1.0]]))
        with pytest.raises(ContractViolation):
            GraspPlan(np.zeros(3), np.array([0.0, 0.0, 1.0]), c, 0.025, 1)

    def test_fields_read_only(self):
        plan = plan_grasp(half_cylinder_shell())
        with pytest.raises(ValueError):
            plan.axis[0] = 5.0


class TestTransformPlan:
    def test_matches_componentwise_oracle(self, rng):
        plan = plan_grasp(half_cylinder_shell())
        angle = 0.7
        rot = np.array(
            [[np.cos(angle), -np.sin(angle), 0.0],
             [np.sin(angle), np.cos(angle), 0.0],
             [0.0, 0.0, 1.0]]
        )
        pose = Pose(rot, np.array([0.3, -0.1, 0.9]),
                    from_frame=FrameId.CAMERA, to_frame=FrameId.WORLD)
        moved = transform_plan(plan, pose)
        assert np.allclose(moved.centroid, rot @ plan.centroid + pose.translation, atol=1e-12)
        assert np.allclose(moved.axis, rot @ plan.axis, atol=1e-12)
        assert np.allclose(
            moved.candidates.points,
            plan.candidates.points @ rot.T + pose.translation,
            atol=1e-12,
        )
        assert moved.candidates.frame == FrameId.WORLD
        assert moved.slab_thickness == plan.slab_thickness
        assert moved.source_count == plan.source_count

    def test_slab_invariant_under_rigid_motion(self, rng):
        plan = plan_grasp(half_cylinder_shell())
        pose = Pose(np.eye(3), np.array([1.0, 2.0, 3.0]),
                    from_frame=FrameId.CAMERA, to_frame=FrameId.WORLD)
        moved = transform_plan(plan, pose)
        proj = np.abs((moved.candidates.points - moved.centroid) @ moved.axis)
        assert np.all(proj <= moved.slab_thickness / 2 + 1e-9)


class TestPlanSerialization:
    def test_json_dict_fields(self):
        plan = plan_grasp(half_cylinder_shell())
        d = plan_to_json_dict(plan, candidates_ply="c.ply")
        assert d["candidates_ply"] == "c.ply"
        assert d["candidate_count"] == len(plan.candidates)
        assert d["source_count"] == plan.source_count
        assert np.allclose(d["centroid"], plan.centroid)
        assert np.allclose(d["axis"], plan.axis)
        assert d["slab_thickness"] == plan.slab_thickness

    def test_write_plan_creates_json_and_sidecar(self, tmp_path):
        plan = plan_grasp(half_cylinder_shell())
        json_path = tmp_path / "plan.json"
        sidecar = write_plan(plan, json_path)
        assert sidecar == tmp_path / "plan.candidates.ply"
        loaded = json.loads(json_path.read_text())
        assert loaded["candidates_ply"] == "plan.candidates.ply"
        cloud = read_ply(sidecar)
        assert len(cloud) == loaded["candidate_count"]
        assert np.allclose(cloud.points, plan.candidates.points, atol=5e-7)
