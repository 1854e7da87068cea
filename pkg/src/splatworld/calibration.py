"""Hand-eye calibration: Tsai-Lenz solution of A_i X = X B_i.

Stations are logged as absolute poses (gripper in robot base, target in
camera); relative motions between consecutive stations form the motion
pairs. The solved X is the camera pose in the robot-base frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .transforms import RigidPose, matrix_to_quat, quat_to_rotvec

__all__ = [
    "MotionPair",
    "HandEyeResult",
    "motion_pairs_from_stations",
    "hand_eye_tsai_lenz",
]


@dataclass(frozen=True)
class MotionPair:
    gripper_motion: RigidPose  # A_i: relative base->gripper motion between stations
    camera_motion: RigidPose   # B_i: relative target->camera motion between stations


@dataclass(frozen=True)
class HandEyeResult:
    transform: RigidPose
    rotation_residual: float     # max geodesic angle of R_A R_X vs R_X R_B (rad)
    translation_residual: float  # max |(R_A - I) t_X - (R_X t_B - t_A)| (m)


def motion_pairs_from_stations(stations) -> list[MotionPair]:
    """Form A_i, B_i from consecutive absolute station poses.

    Each station is (gripper_pose, target_in_camera). With G_i the
    gripper pose and C_i the target-in-camera pose, consecutive stations
    give A = G_j @ G_i^-1 and B = C_j @ C_i^-1, which satisfy A X = X B
    for X = camera-in-base.
    """
    stations = list(stations)
    if len(stations) < 3:
        raise ValueError(f"need at least 3 stations, got {len(stations)}")
    pairs = []
    for (g0, c0), (g1, c1) in zip(stations, stations[1:]):
        pairs.append(MotionPair(g1 @ g0.inverse(), c1 @ c0.inverse()))
    return pairs


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def _modified_rodrigues(pose: RigidPose) -> np.ndarray:
    """2*sin(theta/2) * axis for the pose's rotation."""
    rv = quat_to_rotvec(pose.rotation)
    angle = np.linalg.norm(rv)
    if angle < 1e-12:
        return np.zeros(3)
    return 2.0 * np.sin(angle / 2.0) * rv / angle


def hand_eye_tsai_lenz(pairs) -> HandEyeResult:
    """Two-stage Tsai-Lenz solve of A_i X = X B_i.

    Stage one recovers the rotation from a linear system on the motion
    rotation-axis vectors; stage two recovers the translation from the
    induced linear system. Requires >= 2 pairs with non-parallel
    rotation axes.
    """
    pairs = list(pairs)
    if len(pairs) < 2:
        raise ValueError(f"need at least 2 motion pairs, got {len(pairs)}")

    rows = []
    rhs = []
    for pair in pairs:
        pa = _modified_rodrigues(pair.gripper_motion)
        pb = _modified_rodrigues(pair.camera_motion)
        rows.append(_skew(pa + pb))
        rhs.append(pb - pa)
    m = np.concatenate(rows)
    v = np.concatenate(rhs)

    sv = np.linalg.svd(m, compute_uv=False)
    if sv[2] < 1e-8 * max(sv[0], 1e-12):
        raise ValueError(
            "degenerate motions: rotation axes are parallel or too small "
            f"(singular values {sv[:3].tolist()})"
        )

    p_prime, *_ = np.linalg.lstsq(m, v, rcond=None)
    p = 2.0 * p_prime / np.sqrt(1.0 + float(p_prime @ p_prime))
    pn2 = float(p @ p)
    r_x = (
        (1.0 - pn2 / 2.0) * np.eye(3)
        + 0.5 * (np.outer(p, p) + np.sqrt(max(4.0 - pn2, 0.0)) * _skew(p))
    )

    rows_t = []
    rhs_t = []
    for pair in pairs:
        ra = pair.gripper_motion.matrix3
        rows_t.append(ra - np.eye(3))
        rhs_t.append(r_x @ pair.camera_motion.translation - pair.gripper_motion.translation)
    t_x, *_ = np.linalg.lstsq(np.concatenate(rows_t), np.concatenate(rhs_t), rcond=None)

    x = RigidPose(matrix_to_quat(r_x), t_x)
    rot_res = 0.0
    tr_res = 0.0
    for pair in pairs:
        lhs = pair.gripper_motion @ x
        rhs_pose = x @ pair.camera_motion
        diff = lhs.inverse() @ rhs_pose
        rot_res = max(rot_res, float(np.linalg.norm(quat_to_rotvec(diff.rotation))))
        tr_res = max(tr_res, float(np.linalg.norm(lhs.translation - rhs_pose.translation)))
    return HandEyeResult(x, rot_res, tr_res)
