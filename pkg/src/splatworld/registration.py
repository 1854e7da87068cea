"""Similarity-transform estimation: closed-form Umeyama fit and scaled ICP.

Both estimate the Sim(3) minimizing sum ||s*R*p_i + t - q_i||^2. ICP
alternates exact nearest-neighbor correspondence (k-d tree, distance
gated, worst fraction trimmed) with the closed-form update, and never
accepts a step that increases the residual, so the recorded residual
sequence is non-increasing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .pointcloud import PointCloud
from .transforms import Sim3, matrix_to_quat

__all__ = ["IcpParams", "IcpResult", "umeyama_sim3", "scaled_icp", "chamfer_distance"]


class DegenerateGeometryError(ValueError):
    """Input geometry does not constrain the requested transform."""


def umeyama_sim3(src: np.ndarray, dst: np.ndarray) -> Sim3:
    """Closed-form least-squares Sim(3) fit of src onto dst.

    Uses the variance-normalized scale estimate with SVD sign correction,
    so det(R) = +1 and s > 0. Requires >= 3 non-collinear correspondences.
    """
    src = np.asarray(src, dtype=np.float64).reshape(-1, 3)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 3)
    if len(src) != len(dst):
        raise ValueError(f"correspondence count mismatch: {len(src)} vs {len(dst)}")
    n = len(src)
    if n < 3:
        raise DegenerateGeometryError(f"need at least 3 correspondence pairs, got {n}")

    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    xs = src - mu_s
    xd = dst - mu_d

    cov = xd.T @ xs / n
    u, d, vt = np.linalg.svd(cov)

    # Collinear sources leave the rotation about the line unconstrained.
    spread = np.linalg.svd(xs, compute_uv=False)
    if spread[1] <= 1e-9 * max(spread[0], 1e-30):
        raise DegenerateGeometryError(
            f"degenerate correspondence geometry: singular spread {spread.tolist()}"
        )

    sign = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        sign[2, 2] = -1.0
    rot = u @ sign @ vt

    var_s = (xs ** 2).sum() / n
    scale = float(np.trace(np.diag(d) @ sign) / var_s)
    if scale <= 0:
        raise DegenerateGeometryError(f"non-positive scale estimate {scale}")
    t = mu_d - scale * rot @ mu_s
    return Sim3(scale, matrix_to_quat(rot), t)


@dataclass(frozen=True)
class IcpParams:
    max_iterations: int = 50
    convergence_eps: float = 1e-8  # relative residual change
    max_correspondence_dist: float | None = None  # default: 10x dst median NN spacing
    trim_fraction: float = 0.1

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.convergence_eps <= 0:
            raise ValueError("convergence_eps must be positive")
        if self.max_correspondence_dist is not None and self.max_correspondence_dist <= 0:
            raise ValueError("max_correspondence_dist must be positive")
        if not 0 <= self.trim_fraction < 0.5:
            raise ValueError("trim_fraction must lie in [0, 0.5)")


@dataclass(frozen=True)
class IcpResult:
    transform: Sim3
    residual: float  # mean squared correspondence distance at the final transform
    iterations: int
    residual_history: tuple  # non-increasing by construction


def _median_nn_spacing(points: np.ndarray, tree: cKDTree) -> float:
    d, _ = tree.query(points, k=2)
    return float(np.median(d[:, 1]))


def scaled_icp(
    src: PointCloud,
    dst: PointCloud,
    init: Sim3 | None = None,
    params: IcpParams | None = None,
) -> IcpResult:
    """Iteratively align src onto dst with a Sim(3), re-estimating scale
    every iteration. Returns the transform and the mean squared
    correspondence distance at that transform."""
    if init is None:
        init = Sim3.identity()
    if params is None:
        params = IcpParams()
    if len(src) == 0 or len(dst) == 0:
        raise ValueError("scaled_icp requires non-empty clouds")

    tree = cKDTree(dst.points)
    gate = params.max_correspondence_dist
    if gate is None:
        gate = 10.0 * _median_nn_spacing(dst.points, tree) if len(dst) > 1 else np.inf

    def correspondences(transform: Sim3):
        moved = transform.apply(src.points)
        dist, idx = tree.query(moved)
        keep = dist <= gate
        if not np.any(keep):
            return None
        dist, idx = dist[keep], idx[keep]
        kept_src = src.points[keep]
        if params.trim_fraction > 0 and len(dist) > 3:
            n_keep = max(3, int(np.ceil(len(dist) * (1.0 - params.trim_fraction))))
            order = np.argsort(dist, kind="stable")[:n_keep]
            dist, idx, kept_src = dist[order], idx[order], kept_src[order]
        return kept_src, dst.points[idx], float(np.mean(dist ** 2))

    current = init
    match = correspondences(current)
    if match is None:
        raise ValueError(
            f"no correspondences within gate {gate:.6g} at the initial transform; bad init"
        )
    residual = match[2]
    history = [residual]
    iterations = 0

    for _ in range(params.max_iterations):
        try:
            candidate = umeyama_sim3(match[0], match[1])
        except DegenerateGeometryError:
            break
        new_match = correspondences(candidate)
        if new_match is None or new_match[2] > residual:
            break  # never accept a worsening step
        iterations += 1
        improved = residual - new_match[2]
        current, match, residual = candidate, new_match, new_match[2]
        history.append(residual)
        if improved <= params.convergence_eps * max(history[0], 1e-30):
            break

    return IcpResult(current, residual, iterations, tuple(history))


def chamfer_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric mean nearest-neighbor distance between two point sets."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("chamfer_distance requires non-empty point sets")
    d_ab, _ = cKDTree(b).query(a)
    d_ba, _ = cKDTree(a).query(b)
    return 0.5 * (float(np.mean(d_ab)) + float(np.mean(d_ba)))
