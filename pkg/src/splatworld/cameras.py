"""Pinhole camera model and the rigid camera-pose update under a scene
similarity.

Convention: camera looks down +z, x right, y down (image rows grow with
y). Pixel (row r, col c) has its center at (c + 0.5, r + 0.5).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .transforms import RigidPose, Sim3, quat_multiply

__all__ = ["PinholeCamera", "transform_camera_pose"]


@dataclass(frozen=True)
class PinholeCamera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    pose: RigidPose  # camera-to-world

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be >= 1")

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        """Map world points into the camera frame."""
        pts = np.asarray(points, dtype=np.float64)
        r = self.pose.matrix3
        return (pts - self.pose.translation) @ r

    def project(self, points: np.ndarray):
        """Project world points to pixel coordinates.

        Returns (uv, z): pixel positions and camera-space depths. Points
        at or behind z = 0 produce non-finite uv.
        """
        pc = self.world_to_camera(points)
        single = pc.ndim == 1
        pc = np.atleast_2d(pc)
        z = pc[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * pc[:, 0] / z + self.cx
            v = self.fy * pc[:, 1] / z + self.cy
        uv = np.stack([u, v], axis=1)
        uv[z <= 0] = np.nan
        if single:
            return uv[0], float(z[0])
        return uv, z

    def scaled(self, factor: int) -> "PinholeCamera":
        """Integer-downsampled camera (factor >= 1)."""
        if factor < 1:
            raise ValueError("downsample factor must be >= 1")
        return PinholeCamera(
            self.fx / factor,
            self.fy / factor,
            self.cx / factor,
            self.cy / factor,
            max(1, self.width // factor),
            max(1, self.height // factor),
            self.pose,
        )

    def to_json(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
            "pose": self.pose.to_json(),
        }

    @staticmethod
    def from_json(doc: dict) -> "PinholeCamera":
        return PinholeCamera(
            float(doc["fx"]), float(doc["fy"]), float(doc["cx"]), float(doc["cy"]),
            int(doc["width"]), int(doc["height"]), RigidPose.from_json(doc["pose"]),
        )


def look_at_pose(position, target, up=(0.0, 0.0, 1.0)) -> RigidPose:
    """Camera-to-world pose looking from position toward target
    (z forward, y down)."""
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    forward = forward / np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    n = np.linalg.norm(right)
    if n < 1e-9:
        raise ValueError("camera forward direction is parallel to up")
    right /= n
    down = np.cross(forward, right)
    from .transforms import matrix_to_quat

    return RigidPose(matrix_to_quat(np.stack([right, down, forward], axis=1)), position)


def transform_camera_pose(pose: RigidPose, transform: Sim3) -> RigidPose:
    """Update a camera-to-world pose for a rescaled scene: the rotation is
    left-composed unscaled and the translation is scaled, so projections
    of jointly transformed points are unchanged (the perspective divide
    cancels the uniform camera-frame scaling)."""
    rot = quat_multiply(transform.rotation, pose.rotation)
    t = transform.scale * (transform.matrix3 @ pose.translation) + transform.translation
    return RigidPose(rot, t)
