"""Geometry-based grasp planning on a cleaned object point cloud.

Four steps: estimate centroid and dominant axis, duplicate the cloud by a
180-degree rotation about that axis to stand in for the unseen back
surface, re-estimate centroid and axis on the combined cloud, then cut a
thin slab normal to the axis through the new centroid. The slab members
are the candidate contact spots for an opposing-finger gripper.

Assumes the object is roughly axially symmetric, fits the gripper and is
light enough to lift; the planner checks the fit, the rest are the
caller's responsibility.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cloud import PointCloud, write_ply
from .errors import ContractViolation, GripperApertureExceeded, NoValidGrasp
from .geometry import Pose, transform_points

DEFAULT_SLAB_THICKNESS = 0.025

_EIGENVALUE_TIE_REL = 1e-9


@dataclass(frozen=True)
class GraspAssumptions:
    """Operating envelope the planner may rely on."""

    max_extent: float = 0.2  # gripper aperture, meters
    max_mass: float = 0.5  # kilograms; recorded, not checkable from a cloud
    axially_symmetric: bool = True

    def __post_init__(self):
        if self.max_extent <= 0:
            raise ContractViolation(f"max_extent must be positive, got {self.max_extent}")


@dataclass(frozen=True)
class GraspPlan:
    """Planner output: combined-cloud centroid, grasp axis and contact slab."""

    centroid: np.ndarray
    axis: np.ndarray
    candidates: PointCloud
    slab_thickness: float
    source_count: int

    def __post_init__(self):
        c = np.asarray(self.centroid, dtype=np.float64)
        a = np.asarray(self.axis, dtype=np.float64)
        if abs(np.linalg.norm(a) - 1.0) > 1e-9:
            raise ContractViolation("axis must be a unit vector")
        if len(self.candidates) == 0:
            raise ContractViolation("candidate slab is empty")
        proj = np.abs((self.candidates.points - c) @ a)
        if np.any(proj > self.slab_thickness / 2 + 1e-12):
            raise ContractViolation("candidate outside the slab")
        for name, arr in (("centroid", c), ("axis", a)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


def centroid(c: PointCloud) -> np.ndarray:
    """Arithmetic mean of the points."""
    if len(c) == 0:
        raise ContractViolation("centroid of an empty cloud")
    return c.points.mean(axis=0)


def principal_axis(c: PointCloud) -> np.ndarray:
    """Unit eigenvector of the point covariance with the largest eigenvalue.

    Deterministic: the sign makes the largest-magnitude component
    positive; near-equal top eigenvalues (1e-9 relative) break ties toward
    the world z-axis and then lexicographically.
    """
    if len(c) < 3:
        raise ContractViolation(f"principal axis needs at least 3 points, got {len(c)}")
    pts = c.points - c.points.mean(axis=0)
    cov = pts.T @ pts / len(pts)
    eigvals, eigvecs = np.linalg.eigh(cov)  # ascending
    top = eigvals[-1]
    tied = [k for k in range(3) if top - eigvals[k] <= _EIGENVALUE_TIE_REL * max(top, 1e-300)]

    def fix_sign(v):
        return -v if v[np.argmax(np.abs(v))] < 0 else v

    best = max(
        (fix_sign(eigvecs[:, k]) for k in tied),
        key=lambda v: (round(abs(v[2]), 12), tuple(v)),
    )
    return best / np.linalg.norm(best)


def mirror_about_axis(c: PointCloud, axis, pivot) -> PointCloud:
    """Rotate every point 180 degrees about the line through `pivot` along `axis`.

    An involution and an isometry; points on the axis line are fixed.
    Colors ride along unchanged.
    """
    a = np.asarray(axis, dtype=np.float64)
    if abs(np.linalg.norm(a) - 1.0) > 1e-9:
        raise ContractViolation("axis must be a unit vector")
    pivot = np.asarray(pivot, dtype=np.float64)
    rot = 2.0 * np.outer(a, a) - np.eye(3)
    return PointCloud((c.points - pivot) @ rot.T + pivot, c.colors, frame=c.frame)


def _merge(a: PointCloud, b: PointCloud) -> PointCloud:
    colors = None
    if a.colors is not None and b.colors is not None:
        colors = np.vstack([a.colors, b.colors])
    return PointCloud(np.vstack([a.points, b.points]), colors, frame=a.frame)


def _mirror_pivot(points: np.ndarray, ctr: np.ndarray, axis: np.ndarray) -> np.ndarray:
    """Anchor point for the duplicate-and-rotate axis line.

    A single view only sees the target's front surface, so the raw
    centroid sits in front of the true axis. For a solid of revolution
    the axis is exactly one cross-section radius behind the front-most
    surface point, and that radius equals half the silhouette width
    perpendicular to the view. Both quantities are well sampled even in
    a cloud a few pixels wide, unlike the grazing silhouette edge along
    the view direction.

    The combined centroid after the 180-degree duplication lands on the
    pivot's axis line, so this anchor is what corrects the estimate. A
    cloud that already wraps the object (front extent equals half-width)
    yields a zero shift and the centroid stays put.
    """
    view_norm = np.linalg.norm(ctr)
    if view_norm < 1e-9:
        return ctr
    view = ctr / view_norm
    d = view - (view @ axis) * axis
    d_norm = np.linalg.norm(d)
    if d_norm < 1e-9:  # looking straight down the axis: no depth information
        return ctr
    d /= d_norm
    e = np.cross(axis, d)
    rel = points - ctr
    half_width = np.abs(rel @ e).max()
    front = (rel @ d).min()
    return ctr + (front + half_width) * d


def plan_grasp(
    c: PointCloud,
    assumptions: GraspAssumptions = GraspAssumptions(),
    slab_thickness: float = DEFAULT_SLAB_THICKNESS,
) -> GraspPlan:
    """Run the four planning steps on a cleaned cloud.

    Expects the cloud in the frame it was captured in (viewpoint at the
    origin). Raises GripperApertureExceeded when the estimated object is
    wider across the grasp axis than the gripper opens, NoValidGrasp when
    the slab is empty.
    """
    if slab_thickness <= 0:
        raise ContractViolation(f"slab_thickness must be positive, got {slab_thickness}")
    ctr = centroid(c)
    axis = principal_axis(c)

    pivot = _mirror_pivot(c.points, ctr, axis)
    combined = _merge(c, mirror_about_axis(c, axis, pivot))

    new_ctr = centroid(combined)
    new_axis = principal_axis(combined)

    rel = combined.points - new_ctr
    minor = rel - np.outer(rel @ new_axis, new_axis)
    for direction in _perpendicular_basis(new_axis):
        spread = minor @ direction
        if spread.max() - spread.min() > assumptions.max_extent:
            raise GripperApertureExceeded(
                f"extent {spread.max() - spread.min():.3f} m across the grasp axis "
                f"exceeds the {assumptions.max_extent:.3f} m aperture"
            )

    proj = np.abs((combined.points - new_ctr) @ new_axis)
    keep = proj <= slab_thickness / 2
    if not np.any(keep):
        raise NoValidGrasp("no point within the cutting slab")
    return GraspPlan(
        centroid=new_ctr,
        axis=new_axis,
        candidates=combined.select(keep),
        slab_thickness=slab_thickness,
        source_count=len(c),
    )


def _perpendicular_basis(axis: np.ndarray):
    seed = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = seed - (seed @ axis) * axis
    u /= np.linalg.norm(u)
    return u, np.cross(axis, u)


def transform_plan(plan: GraspPlan, pose: Pose) -> GraspPlan:
    """Carry a plan into another frame (centroid, axis and candidates together)."""
    return GraspPlan(
        centroid=pose.rotation @ plan.centroid + pose.translation,
        axis=pose.rotation @ plan.axis,
        candidates=PointCloud(
            transform_points(pose, plan.candidates.points),
            plan.candidates.colors,
            frame=pose.to_frame,
        ),
        slab_thickness=plan.slab_thickness,
        source_count=plan.source_count,
    )


def plan_to_json_dict(plan: GraspPlan, candidates_ply: str | None = None) -> dict:
    return {
        "centroid": list(plan.centroid),
        "axis": list(plan.axis),
        "slab_thickness": plan.slab_thickness,
        "candidate_count": len(plan.candidates),
        "candidates_ply": candidates_ply,
        "source_count": plan.source_count,
    }


def write_plan(plan: GraspPlan, json_path) -> Path:
    """Write the plan as JSON plus a PLY sidecar; returns the sidecar path."""
    json_path = Path(json_path)
    ply_path = json_path.with_suffix(".candidates.ply")
    write_ply(plan.candidates, ply_path)
    json_path.write_text(
        json.dumps(plan_to_json_dict(plan, candidates_ply=ply_path.name), sort_keys=True, indent=2)
        + "\n"
    )
    return ply_path
