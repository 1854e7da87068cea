"""Quaternion utilities and the Sim(3) / SE(3) transform types.

Quaternions are stored (w, x, y, z) and kept unit-norm. Sim3 is the
similarity group (uniform scale * rotation + translation) used for all
asset alignment and placement; RigidPose is the scale-free special case
used for camera and robot poses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "quat_normalize",
    "quat_multiply",
    "quat_conjugate",
    "quat_to_matrix",
    "matrix_to_quat",
    "quat_from_axis_angle",
    "quat_to_rotvec",
    "rotvec_to_quat",
    "quat_from_rpy",
    "quat_angle_between",
    "RigidPose",
    "Sim3",
]

_UNIT_TOL = 1e-9


def quat_normalize(q: np.ndarray) -> np.ndarray:
    """Return q scaled to unit norm; rejects zero-norm quaternions."""
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise ValueError("zero-norm quaternion cannot be normalized")
    return q / n


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a*b, so that R(a*b) = R(a) @ R(b)."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a (w, x, y, z) quaternion (normalized internally)."""
    w, x, y, z = quat_normalize(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Quaternion (w >= 0 hemisphere) of a rotation matrix."""
    m = np.asarray(m, dtype=np.float64)
    t = np.trace(m)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(m)))
        if i == 0:
            s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
            q = np.array(
                [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
            )
        elif i == 1:
            s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
            q = np.array(
                [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
            )
        else:
            s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
            q = np.array(
                [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
            )
    if q[0] < 0:
        q = -q
    return quat_normalize(q)


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n < 1e-12:
        raise ValueError("rotation axis has zero norm")
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis / n])


def quat_to_rotvec(q: np.ndarray) -> np.ndarray:
    """Axis-angle vector (angle <= pi after hemisphere selection)."""
    q = quat_normalize(q)
    if q[0] < 0:
        q = -q
    v = q[1:]
    s = np.linalg.norm(v)
    if s < 1e-12:
        return 2.0 * v  # small-angle: sin(t/2) ~ t/2
    angle = 2.0 * np.arctan2(s, q[0])
    return v / s * angle


def rotvec_to_quat(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    angle = np.linalg.norm(r)
    if angle < 1e-12:
        return quat_normalize(np.concatenate([[1.0], 0.5 * r]))
    return quat_from_axis_angle(r, angle)


def quat_from_rpy(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Fixed-axis XYZ convention: Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    qx = quat_from_axis_angle(np.array([1.0, 0, 0]), roll)
    qy = quat_from_axis_angle(np.array([0, 1.0, 0]), pitch)
    qz = quat_from_axis_angle(np.array([0, 0, 1.0]), yaw)
    return quat_multiply(qz, quat_multiply(qy, qx))


def quat_angle_between(a: np.ndarray, b: np.ndarray) -> float:
    """Geodesic angle between two rotations, in radians."""
    d = quat_multiply(quat_conjugate(quat_normalize(a)), quat_normalize(b))
    return float(np.linalg.norm(quat_to_rotvec(d)))


def _as_unit_quat(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64).reshape(4)
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise ValueError("zero-norm quaternion")
    if abs(n - 1.0) > _UNIT_TOL:
        q = q / n
    return q


def _as_vec3(t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(t)):
        raise ValueError("translation must be finite")
    return t


@dataclass(frozen=True)
class RigidPose:
    """SE(3) transform: rotation (unit quaternion, wxyz) + translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0, 0, 0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", _as_unit_quat(self.rotation))
        object.__setattr__(self, "translation", _as_vec3(self.translation))

    @staticmethod
    def identity() -> "RigidPose":
        return RigidPose()

    @property
    def matrix3(self) -> np.ndarray:
        m = self.__dict__.get("_m3")
        if m is None:
            m = quat_to_matrix(self.rotation)
            object.__setattr__(self, "_m3", m)
        return m

    @property
    def matrix4(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.matrix3
        m[:3, 3] = self.translation
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map points (3,) or (N, 3) through the transform."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.matrix3.T + self.translation

    def compose(self, other: "RigidPose") -> "RigidPose":
        """self after other: (self ∘ other)(x) = self(other(x))."""
        return RigidPose(
            quat_multiply(self.rotation, other.rotation),
            self.apply(other.translation),
        )

    def inverse(self) -> "RigidPose":
        qinv = quat_conjugate(self.rotation)
        return RigidPose(qinv, -(quat_to_matrix(qinv) @ self.translation))

    def to_sim3(self) -> "Sim3":
        return Sim3(1.0, self.rotation, self.translation)

    def to_json(self) -> dict:
        return {"quat_wxyz": self.rotation.tolist(), "t": self.translation.tolist()}

    @staticmethod
    def from_json(doc: dict) -> "RigidPose":
        return RigidPose(np.asarray(doc["quat_wxyz"], dtype=np.float64),
                         np.asarray(doc["t"], dtype=np.float64))

    def __matmul__(self, other: "RigidPose") -> "RigidPose":
        return self.compose(other)

    def allclose(self, other: "RigidPose", atol: float = 1e-9) -> bool:
        # q and -q are the same rotation
        qd = min(np.abs(self.rotation - other.rotation).max(),
                 np.abs(self.rotation + other.rotation).max())
        return qd <= atol and np.abs(self.translation - other.translation).max() <= atol


@dataclass(frozen=True)
class Sim3:
    """Similarity transform x -> scale * R @ x + t with scale > 0."""

    scale: float = 1.0
    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0, 0, 0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        s = float(self.scale)
        if not (np.isfinite(s) and s > 0):
            raise ValueError(f"Sim3 scale must be positive and finite, got {s}")
        object.__setattr__(self, "scale", s)
        object.__setattr__(self, "rotation", _as_unit_quat(self.rotation))
        object.__setattr__(self, "translation", _as_vec3(self.translation))

    @staticmethod
    def identity() -> "Sim3":
        return Sim3()

    @property
    def matrix3(self) -> np.ndarray:
        m = self.__dict__.get("_m3")
        if m is None:
            m = quat_to_matrix(self.rotation)
            object.__setattr__(self, "_m3", m)
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return self.scale * (pts @ self.matrix3.T) + self.translation

    def compose(self, other: "Sim3") -> "Sim3":
        """self after other: (self ∘ other)(x) = self(other(x))."""
        return Sim3(
            self.scale * other.scale,
            quat_multiply(self.rotation, other.rotation),
            self.apply(other.translation),
        )

    def inverse(self) -> "Sim3":
        qinv = quat_conjugate(self.rotation)
        return Sim3(
            1.0 / self.scale,
            qinv,
            -(quat_to_matrix(qinv) @ self.translation) / self.scale,
        )

    @property
    def rigid(self) -> RigidPose:
        """Rotation + translation with the scale dropped."""
        return RigidPose(self.rotation, self.translation)

    def to_json(self) -> dict:
        return {
            "scale": self.scale,
            "quat_wxyz": self.rotation.tolist(),
            "t": self.translation.tolist(),
        }

    @staticmethod
    def from_json(doc: dict) -> "Sim3":
        return Sim3(
            float(doc["scale"]),
            np.asarray(doc["quat_wxyz"], dtype=np.float64),
            np.asarray(doc["t"], dtype=np.float64),
        )

    def __matmul__(self, other: "Sim3") -> "Sim3":
        return self.compose(other)

    def allclose(self, other: "Sim3", atol: float = 1e-9) -> bool:
        qd = min(np.abs(self.rotation - other.rotation).max(),
                 np.abs(self.rotation + other.rotation).max())
        return (
            abs(self.scale - other.scale) <= atol
            and qd <= atol
            and np.abs(self.translation - other.translation).max() <= atol
        )
