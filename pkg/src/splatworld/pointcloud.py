"""Point clouds, Sim(3) point mapping, axis-aligned crops, and xyz PLY I/O."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .transforms import Sim3

__all__ = ["PointCloud", "transform_points", "crop_cloud", "read_cloud_ply", "write_cloud_ply"]


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray  # (N, 3) meters
    label: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite points")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)


def transform_points(cloud: PointCloud, transform: Sim3) -> PointCloud:
    """Map every point p -> s*R*p + t."""
    return PointCloud(transform.apply(cloud.points), cloud.label)


def crop_cloud(cloud: PointCloud, box_min, box_max) -> PointCloud:
    """Keep points inside the closed axis-aligned box [min, max]."""
    lo = np.asarray(box_min, dtype=np.float64).reshape(3)
    hi = np.asarray(box_max, dtype=np.float64).reshape(3)
    keep = np.all((cloud.points >= lo) & (cloud.points <= hi), axis=1)
    return PointCloud(cloud.points[keep], cloud.label)


def write_cloud_ply(cloud: PointCloud) -> bytes:
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {len(cloud)}\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "end_header\n"
    ).encode("ascii")
    return header + cloud.points.astype("<f4").tobytes()


def read_cloud_ply(data: bytes, label: str = "") -> PointCloud:
    end = data.find(b"end_header\n")
    if end < 0:
        raise ValueError("malformed PLY: no end_header")
    body = data[end + len(b"end_header\n"):]
    header = data[:end].decode("ascii", errors="replace").splitlines()
    n = None
    for line in header:
        if line.startswith("element vertex"):
            n = int(line.split()[-1])
    if n is None:
        raise ValueError("malformed PLY: no vertex element")
    pts = np.frombuffer(body, dtype="<f4", count=3 * n).reshape(n, 3)
    return PointCloud(pts.astype(np.float64), label)
