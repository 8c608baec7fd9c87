"""Point-cloud construction from masked RGB-D frames and the cleanup stages.

The cleanup chain is: build (mask + depth gate + black-point removal),
radius outlier removal, voxel downsampling. Every stage is a contraction
(never emits more points than it consumes) and is deterministic, so each
one can be checked against a brute-force oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import ContractViolation, ObjectNotVisible
from .geometry import FrameId
from .imaging import FramePair, SegMask


@dataclass(frozen=True)
class FilterParams:
    """Cleanup parameters.

    The outlier and voxel values are engineering defaults tuned for a
    close-range depth camera; min_depth matches the camera's minimum
    depth rating, max_depth caps the working range.
    """

    outlier_radius: float = 0.02
    outlier_min_neighbors: int = 10
    voxel_size: float = 0.01
    min_depth: float = 0.6
    max_depth: float = 4.0

    def __post_init__(self):
        if self.outlier_radius <= 0 or self.voxel_size <= 0:
            raise ContractViolation("outlier_radius and voxel_size must be positive")
        if self.outlier_min_neighbors < 0:
            raise ContractViolation("outlier_min_neighbors must be nonnegative")
        if self.min_depth <= 0 or self.max_depth <= 0 or self.min_depth >= self.max_depth:
            raise ContractViolation(
                f"need 0 < min_depth < max_depth, got [{self.min_depth}, {self.max_depth}]"
            )


@dataclass(frozen=True)
class PointCloud:
    """Points in meters with optional parallel per-point colors."""

    points: np.ndarray  # (n, 3) float64
    colors: np.ndarray | None = None  # (n, 3) uint8
    frame: FrameId = FrameId.CAMERA

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != 3:
            raise ContractViolation(f"points must be (n, 3), got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ContractViolation("points contain non-finite coordinates")
        p = np.ascontiguousarray(p)
        p.flags.writeable = False
        object.__setattr__(self, "points", p)
        if self.colors is not None:
            c = np.asarray(self.colors)
            if c.shape != (len(p), 3) or c.dtype != np.uint8:
                raise ContractViolation(
                    f"colors must be ({len(p)}, 3) uint8, got {c.shape} {c.dtype}"
                )
            c = np.ascontiguousarray(c)
            c.flags.writeable = False
            object.__setattr__(self, "colors", c)

    def __len__(self) -> int:
        return len(self.points)

    def select(self, keep) -> "PointCloud":
        """Subcloud at the given indices or boolean mask, preserving order."""
        return PointCloud(
            self.points[keep],
            None if self.colors is None else self.colors[keep],
            frame=self.frame,
        )


def build_cloud(pair: FramePair, mask: SegMask, params: FilterParams) -> PointCloud:
    """Deproject every masked pixel with valid, in-range depth into a colored cloud.

    A pixel contributes exactly when the mask is true, its raw depth is
    nonzero, the metric depth lies in [min_depth, max_depth] and its color
    is not exactly black (black is the masked-out sentinel).
    """
    if (mask.width, mask.height) != (pair.color.width, pair.color.height):
        raise ContractViolation(
            f"mask {mask.width}x{mask.height} does not match frames "
            f"{pair.color.width}x{pair.color.height}"
        )
    i = pair.intrinsics
    raw = pair.depth.values
    z = raw.astype(np.float64) * i.depth_scale
    colors = pair.color.pixels
    valid = (
        mask.bits
        & (raw > 0)
        & (z >= params.min_depth)
        & (z <= params.max_depth)
        & np.any(colors != 0, axis=2)
    )
    vs, us = np.nonzero(valid)
    if len(us) == 0:
        raise ObjectNotVisible("no masked pixel with valid in-range depth")
    zv = z[vs, us]
    pts = np.column_stack([(us - i.cx) * zv / i.fx, (vs - i.cy) * zv / i.fy, zv])
    return PointCloud(pts, colors[vs, us], frame=FrameId.CAMERA)


def radius_outlier_removal(c: PointCloud, radius: float, min_neighbors: int) -> PointCloud:
    """Keep points that have at least `min_neighbors` others within `radius` (inclusive)."""
    if radius <= 0:
        raise ContractViolation(f"radius must be positive, got {radius}")
    if min_neighbors <= 0 or len(c) == 0:
        return c
    tree = cKDTree(c.points)
    counts = tree.query_ball_point(c.points, r=radius, return_length=True)
    return c.select(counts - 1 >= min_neighbors)  # query counts the point itself


def voxel_downsample(c: PointCloud, voxel: float) -> PointCloud:
    """Collapse each occupied cube of an origin-anchored grid to its centroid.

    Colors, when present, are averaged and rounded. Output is ordered by
    voxel index so downsampling the same cloud always yields the same
    bytes.
    """
    if voxel <= 0:
        raise ContractViolation(f"voxel size must be positive, got {voxel}")
    if len(c) == 0:
        return c
    idx = np.floor(c.points / voxel).astype(np.int64)
    uniq, inverse = np.unique(idx, axis=0, return_inverse=True)
    n_vox = len(uniq)
    counts = np.bincount(inverse, minlength=n_vox).astype(np.float64)
    sums = np.zeros((n_vox, 3))
    np.add.at(sums, inverse, c.points)
    centroids = sums / counts[:, None]
    mean_colors = None
    if c.colors is not None:
        csums = np.zeros((n_vox, 3))
        np.add.at(csums, inverse, c.colors.astype(np.float64))
        mean_colors = np.rint(csums / counts[:, None]).astype(np.uint8)
    return PointCloud(centroids, mean_colors, frame=c.frame)


def write_ply(c: PointCloud, path) -> None:
    """Write an ASCII PLY file, one `x y z r g b` line per vertex.

    Points without colors are written white. Header fields are fixed so
    external viewers and read_ply can parse the output.
    """
    colors = c.colors if c.colors is not None else np.full((len(c), 3), 255, np.uint8)
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(c)}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "end_header",
    ]
    for p, col in zip(c.points, colors):
        lines.append(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f} {col[0]} {col[1]} {col[2]}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_ply(path, frame: FrameId = FrameId.CAMERA) -> PointCloud:
    """Read a PLY file written by write_ply."""
    text = Path(path).read_text().splitlines()
    try:
        header_end = text.index("end_header")
        n = next(int(l.split()[-1]) for l in text if l.startswith("element vertex"))
    except (ValueError, StopIteration):
        raise ContractViolation(f"{path} is not a PLY file written by write_ply")
    pts, cols = [], []
    for line in text[header_end + 1 : header_end + 1 + n]:
        f = line.split()
        pts.append([float(f[0]), float(f[1]), float(f[2])])
        cols.append([int(f[3]), int(f[4]), int(f[5])])
    return PointCloud(np.array(pts).reshape(n, 3), np.array(cols, np.uint8).reshape(n, 3), frame=frame)
