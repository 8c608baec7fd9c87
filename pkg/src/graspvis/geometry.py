"""Coordinate frames, rigid transforms and the pinhole camera model.

Conventions (right-handed throughout):

    Camera frame:  x right, y down, z forward along the optical axis.
    World frame:   x points from the observer toward the scene (the
                   camera's optical axis coincides with +x when the rig
                   flies its nominal orientation), z up, y completing the
                   right-handed set.
    Image frame:   u right, v down, origin at the top-left pixel; integer
                   pixel indices address pixel centers.

Depth values are 16-bit unsigned integers ("Z16"); `depth_scale` converts
them to meters and defaults to millimeters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ContractViolation

_ORTHONORMALITY_TOL = 1e-9


class FrameId(Enum):
    """Named coordinate frames; transforms compose only when the inner ids match."""

    CAMERA = "camera"
    BODY = "body"
    WORLD = "world"


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics plus the raw-depth-to-meters scale.

    depth_scale is meters per raw depth unit; 0.001 treats raw values as
    millimeters, the Z16 convention of consumer depth cameras.
    """

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    depth_scale: float = 0.001

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ContractViolation(f"bad image size {self.width}x{self.height}")
        if self.fx <= 0 or self.fy <= 0:
            raise ContractViolation(f"focal lengths must be positive, got {self.fx}, {self.fy}")
        if not (0 <= self.cx < self.width) or not (0 <= self.cy < self.height):
            raise ContractViolation(f"principal point ({self.cx}, {self.cy}) outside the image")
        if self.depth_scale <= 0:
            raise ContractViolation(f"depth_scale must be positive, got {self.depth_scale}")

    def to_json(self) -> str:
        return json.dumps(
            {
                "width": self.width,
                "height": self.height,
                "fx": self.fx,
                "fy": self.fy,
                "cx": self.cx,
                "cy": self.cy,
                "depth_scale": self.depth_scale,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "Intrinsics":
        d = json.loads(text)
        return cls(
            width=int(d["width"]),
            height=int(d["height"]),
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            depth_scale=float(d["depth_scale"]),
        )


def _as_readonly(a, shape, name):
    arr = np.asarray(a, dtype=np.float64)
    if arr.shape != shape:
        raise ContractViolation(f"{name} must have shape {shape}, got {arr.shape}")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Pose:
    """Rigid transform mapping points in `from_frame` to `to_frame`.

    rotation is a proper orthonormal 3x3 matrix (checked on construction),
    translation is in meters.
    """

    rotation: np.ndarray
    translation: np.ndarray
    from_frame: FrameId = FrameId.CAMERA
    to_frame: FrameId = FrameId.WORLD

    def __post_init__(self):
        object.__setattr__(self, "rotation", _as_readonly(self.rotation, (3, 3), "rotation"))
        object.__setattr__(self, "translation", _as_readonly(self.translation, (3,), "translation"))
        r = self.rotation
        if not np.allclose(r.T @ r, np.eye(3), atol=_ORTHONORMALITY_TOL):
            raise ContractViolation("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > _ORTHONORMALITY_TOL:
            raise ContractViolation("rotation determinant is not +1 (improper rotation)")

    @classmethod
    def identity(cls, frame: FrameId = FrameId.CAMERA, to_frame: FrameId | None = None) -> "Pose":
        return cls(np.eye(3), np.zeros(3), from_frame=frame, to_frame=to_frame or frame)

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation, from_frame=self.to_frame, to_frame=self.from_frame)


def rotation_about(axis, angle_rad: float) -> np.ndarray:
    """Rotation matrix for a right-handed rotation of `angle_rad` about `axis`."""
    a = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(a)
    if n == 0:
        raise ContractViolation("rotation axis must be nonzero")
    x, y, z = a / n
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    t = 1.0 - c
    return np.array(
        [
            [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
            [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
            [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
        ]
    )


def compose(a: Pose, b: Pose) -> Pose:
    """Chain two poses: the result maps b.from_frame into a.to_frame."""
    if a.from_frame != b.to_frame:
        raise ContractViolation(
            f"cannot compose: inner frames differ ({a.from_frame.value} != {b.to_frame.value})"
        )
    return Pose(
        a.rotation @ b.rotation,
        a.rotation @ b.translation + a.translation,
        from_frame=b.from_frame,
        to_frame=a.to_frame,
    )


def transform_point(p: Pose, x) -> np.ndarray:
    """Apply pose `p` to a single 3-vector."""
    x = np.asarray(x, dtype=np.float64)
    return p.rotation @ x + p.translation


def transform_points(p: Pose, xs: np.ndarray) -> np.ndarray:
    """Apply pose `p` to an (N, 3) array of points."""
    xs = np.asarray(xs, dtype=np.float64)
    return xs @ p.rotation.T + p.translation


def deproject_pixel(i: Intrinsics, u: float, v: float, raw_depth: int) -> np.ndarray:
    """Map pixel (u, v) with raw depth back to a camera-frame 3-D point.

    Raw depth 0 means "no measurement at this pixel"; callers are expected
    to skip such pixels, so passing one here is an error.
    """
    if not (0 <= u < i.width and 0 <= v < i.height):
        raise ContractViolation(f"pixel ({u}, {v}) outside {i.width}x{i.height} image")
    if raw_depth <= 0:
        raise ContractViolation("no depth at pixel (raw_depth == 0)")
    z = raw_depth * i.depth_scale
    return np.array([(u - i.cx) * z / i.fx, (v - i.cy) * z / i.fy, z])


def project_point(i: Intrinsics, point) -> tuple[float, float, int]:
    """Analytic inverse of deproject_pixel: camera-frame point -> (u, v, raw_depth)."""
    x, y, z = np.asarray(point, dtype=np.float64)
    if z <= 0:
        raise ContractViolation("point is behind the camera")
    u = x * i.fx / z + i.cx
    v = y * i.fy / z + i.cy
    return u, v, int(round(z / i.depth_scale))
