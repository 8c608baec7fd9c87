"""Shared fixtures and data generators for the test suite."""

import numpy as np
import pytest

from graspvis import (
    ColorFrame,
    DepthFrame,
    FilterParams,
    FrameId,
    FramePair,
    Intrinsics,
    PointCloud,
    Pose,
    SegMask,
    bottle_scene,
    camera_pose_at,
    render,
)

VGA = Intrinsics(width=640, height=480, fx=612.0, fy=611.0, cx=318.5, cy=242.3)


def small_intrinsics(width=64, height=48) -> Intrinsics:
    return Intrinsics(width=width, height=height, fx=60.0, fy=60.0,
                      cx=(width - 1) / 2, cy=(height - 1) / 2)


def random_cloud(rng, n=200, scale=0.05, center=(0.0, 0.0, 1.0), colors=False) -> PointCloud:
    pts = rng.normal(0.0, scale, (n, 3)) + np.asarray(center)
    cols = rng.integers(0, 256, (n, 3), dtype=np.uint8) if colors else None
    return PointCloud(pts, cols)


def random_depth_frame(rng, width=640, height=480) -> DepthFrame:
    return DepthFrame(rng.integers(0, 65536, (height, width), dtype=np.uint16))


def camera_like_frame(rng, width=160, height=120) -> ColorFrame:
    """Smooth shaded content plus mild sensor noise, like a real capture."""
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    base = np.stack(
        [
            120 + 80 * np.sin(xs / width * 2.1) * np.cos(ys / height * 1.3),
            90 + 60 * (xs / width),
            140 + 50 * (ys / height),
        ],
        axis=2,
    )
    noisy = base + rng.normal(0.0, 2.0, base.shape)
    return ColorFrame(np.clip(noisy, 0, 255).astype(np.uint8))


def half_cylinder_shell(radius=0.04, height=0.25, standoff=1.2, n_theta=90, n_z=25) -> PointCloud:
    """Camera-facing half of a cylinder, axis along camera y, viewed from the origin."""
    theta = np.linspace(-np.pi / 2, np.pi / 2, n_theta)
    zs = np.linspace(-height / 2, height / 2, n_z)
    tt, zz = np.meshgrid(theta, zs)
    pts = np.column_stack(
        [radius * np.sin(tt.ravel()), zz.ravel(), standoff - radius * np.cos(tt.ravel())]
    )
    return PointCloud(pts)


def full_cylinder_lattice(radius=0.04, height=0.25, center=(0.0, 0.0, 1.2),
                          n_theta=48, n_z=25) -> PointCloud:
    """Complete cylindrical shell, exactly symmetric about its axis (along y)."""
    theta = np.linspace(0.0, 2 * np.pi, n_theta, endpoint=False)
    zs = np.linspace(-height / 2, height / 2, n_z)
    tt, zz = np.meshgrid(theta, zs)
    pts = np.column_stack(
        [radius * np.sin(tt.ravel()), zz.ravel(), -radius * np.cos(tt.ravel())]
    ) + np.asarray(center)
    return PointCloud(pts)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def bottle_capture():
    """One rendered bottle pair with ground truth, shared across tests."""
    pose = camera_pose_at((-1.2, 0.0, 0.0))
    return render(bottle_scene(), pose, sequence=3, timestamp=11)


@pytest.fixture(scope="session")
def study_filters():
    return FilterParams(outlier_radius=0.05, outlier_min_neighbors=3,
                        voxel_size=0.01, min_depth=0.3, max_depth=4.0)


def body_pose_of(camera_pose: Pose) -> Pose:
    """Relabel a camera-to-world pose as the body pose for identity extrinsics."""
    return Pose(camera_pose.rotation, camera_pose.translation,
                from_frame=FrameId.BODY, to_frame=FrameId.WORLD)
