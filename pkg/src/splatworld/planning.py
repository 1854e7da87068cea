"""Joint-space RRT-Connect planning with shortcut smoothing.

Steps and resampling are bounded in the L-infinity joint metric; edges
are validated at resolution step_size/4 (finer when the estimated
workspace sweep between checks would exceed half the smallest collision
sphere). Failures are explicit: a colliding path is never returned.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .collision import ObstacleSet, check_collision, check_collision_batch
from .kinematics import KinematicChain
from .transforms import RigidPose

__all__ = ["RrtParams", "JointTrajectory", "PlanningError", "plan_rrt",
           "write_trajectory_json", "read_trajectory_json"]


class PlanningError(RuntimeError):
    def __init__(self, message: str, stage: str = "plan"):
        super().__init__(message)
        self.stage = stage


@dataclass(frozen=True)
class RrtParams:
    step_size: float = 0.1       # L-inf joint step, radians
    goal_bias: float = 0.1
    max_samples: int = 20000
    seed: int = 0
    shortcut_attempts: int = 100
    collision_inflate: float = 1e-3  # planning-time safety margin, meters

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if not 0 <= self.goal_bias < 1:
            raise ValueError("goal_bias must lie in [0, 1)")
        if self.max_samples < 1:
            raise ValueError("max_samples must be >= 1")


@dataclass(frozen=True)
class JointTrajectory:
    waypoints: np.ndarray  # (N, dof)
    dt: float = 0.05

    def __post_init__(self):
        w = np.asarray(self.waypoints, dtype=np.float64)
        w = w.reshape(len(w), -1)
        w.setflags(write=False)
        object.__setattr__(self, "waypoints", w)
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    def __len__(self) -> int:
        return len(self.waypoints)


def write_trajectory_json(traj: JointTrajectory) -> dict:
    return {"dt": traj.dt, "waypoints": [list(map(float, w)) for w in traj.waypoints]}


def read_trajectory_json(doc: dict) -> JointTrajectory:
    return JointTrajectory(np.asarray(doc["waypoints"], dtype=np.float64), float(doc["dt"]))


class _Planner:
    def __init__(self, chain, obstacles, params, base_pose):
        self.chain = chain
        self.obstacles = obstacles
        self.params = params
        self.base_pose = base_pose
        self.levers = chain.joint_levers()
        self.min_radius = min(
            (r for link in chain.links for _, r in link.spheres), default=0.05
        )
        self.checks_used = 0

    def config_free(self, q, inflate=None):
        self.checks_used += 1
        inflate = self.params.collision_inflate if inflate is None else inflate
        return not check_collision(self.chain, q, self.obstacles, self.base_pose, inflate)

    def edge_checks(self, a, b) -> int:
        delta = np.abs(b - a)
        n = int(np.ceil(delta.max() / (self.params.step_size / 4.0))) if delta.max() > 0 else 1
        sweep = float(delta @ self.levers)
        n_sweep = int(np.ceil(sweep / max(self.min_radius / 2.0, 1e-6)))
        return max(n, n_sweep, 1)

    def edge_free(self, a, b) -> bool:
        n = self.edge_checks(a, b)
        fractions = np.arange(1, n + 1)[:, None] / n
        qs = a[None, :] + (b - a)[None, :] * fractions
        self.checks_used += n
        return not check_collision_batch(
            self.chain, qs, self.obstacles, self.base_pose, self.params.collision_inflate
        )


def plan_rrt(
    chain: KinematicChain,
    q_start: np.ndarray,
    q_goal: np.ndarray,
    obstacles: ObstacleSet,
    params: RrtParams | None = None,
    base_pose: RigidPose | None = None,
    dt: float = 0.05,
) -> JointTrajectory:
    """Bidirectional RRT (RRT-Connect) in joint space; the returned path
    is shortcut-smoothed, resampled at uniform steps <= step_size, and
    keeps q_start / q_goal exactly. Deterministic per params.seed."""
    params = params or RrtParams()
    q_start = np.asarray(q_start, dtype=np.float64).reshape(-1)
    q_goal = np.asarray(q_goal, dtype=np.float64).reshape(-1)
    if len(q_start) != chain.dof or len(q_goal) != chain.dof:
        raise ValueError("start/goal dimension does not match chain dof")
    if not chain.within_limits(q_start):
        raise PlanningError("start configuration violates joint limits", "start")
    if not chain.within_limits(q_goal):
        raise PlanningError("goal configuration violates joint limits", "goal")

    planner = _Planner(chain, obstacles, params, base_pose)
    if not planner.config_free(q_start, inflate=0.0):
        raise PlanningError("start configuration is in collision", "start")
    if not planner.config_free(q_goal, inflate=0.0):
        raise PlanningError("goal configuration is in collision", "goal")

    rng = np.random.default_rng(params.seed)
    limits = chain.limits

    if planner.edge_free(q_start, q_goal):
        path = [q_start, q_goal]
    else:
        path = _connect_search(planner, rng, limits, q_start, q_goal)
        path = _shortcut(planner, rng, path)

    path = _resample(path, params.step_size)
    return JointTrajectory(np.asarray(path), dt)


def _connect_search(planner, rng, limits, q_start, q_goal):
    params = planner.params
    trees = (
        {"nodes": [q_start], "parents": [-1]},
        {"nodes": [q_goal], "parents": [-1]},
    )
    a, b = 0, 1
    samples = 0
    while samples < params.max_samples:
        samples += 1
        if rng.random() < params.goal_bias:
            q_rand = trees[b]["nodes"][0]
        else:
            q_rand = rng.uniform(limits[:, 0], limits[:, 1])
        new_a = _extend(planner, trees[a], q_rand)
        if new_a is not None:
            bridge = _connect(planner, trees[b], trees[a]["nodes"][new_a])
            if bridge is not None:
                path_a = _trace(trees[a], new_a)
                path_b = _trace(trees[b], bridge)
                if a == 0:
                    return path_a[::-1] + path_b
                return path_b[::-1] + path_a
        a, b = b, a
    raise PlanningError(
        f"no collision-free path within {params.max_samples} samples", "plan"
    )


def _nearest(tree, q) -> int:
    nodes = np.asarray(tree["nodes"])
    return int(np.argmin(((nodes - q) ** 2).sum(axis=1)))


def _step_toward(q_from, q_to, step):
    delta = q_to - q_from
    span = np.abs(delta).max()
    if span <= step:
        return q_to.copy(), True
    return q_from + delta * (step / span), False


def _extend(planner, tree, q_rand):
    i = _nearest(tree, q_rand)
    q_near = tree["nodes"][i]
    q_new, _ = _step_toward(q_near, q_rand, planner.params.step_size)
    if not planner.edge_free(q_near, q_new):
        return None
    tree["nodes"].append(q_new)
    tree["parents"].append(i)
    return len(tree["nodes"]) - 1


def _connect(planner, tree, q_target):
    i = _nearest(tree, q_target)
    q_cur = tree["nodes"][i]
    while True:
        q_new, reached = _step_toward(q_cur, q_target, planner.params.step_size)
        if not planner.edge_free(q_cur, q_new):
            return None
        tree["nodes"].append(q_new)
        tree["parents"].append(i)
        i = len(tree["nodes"]) - 1
        if reached:
            return i
        q_cur = q_new


def _trace(tree, i):
    out = []
    while i != -1:
        out.append(tree["nodes"][i])
        i = tree["parents"][i]
    return out


def _shortcut(planner, rng, path):
    path = list(path)
    for _ in range(planner.params.shortcut_attempts):
        if len(path) < 3:
            break
        i = int(rng.integers(0, len(path) - 2))
        j = int(rng.integers(i + 2, len(path)))
        if planner.edge_free(path[i], path[j]):
            path = path[: i + 1] + path[j:]
    return path


def _resample(path, step):
    out = [path[0]]
    for a, b in zip(path, path[1:]):
        span = np.abs(b - a).max()
        n = max(1, int(np.ceil(span / step)))
        for k in range(1, n + 1):
            out.append(a + (b - a) * (k / n))
    return out


def validate_trajectory(
    chain: KinematicChain,
    traj: JointTrajectory,
    obstacles: ObstacleSet,
    resolution: float,
    base_pose: RigidPose | None = None,
) -> bool:
    """Exact re-validation of every waypoint and interpolated sub-step at
    the given L-inf resolution (no planning margin)."""
    w = traj.waypoints
    if not len(w):
        return True
    configs = [w[0]]
    for a, b in zip(w, w[1:]):
        span = np.abs(b - a).max()
        n = max(1, int(np.ceil(span / resolution)))
        fractions = np.arange(1, n + 1)[:, None] / n
        configs.append(a[None, :] + (b - a)[None, :] * fractions)
    qs = np.vstack([np.atleast_2d(c) for c in configs])
    return not check_collision_batch(chain, qs, obstacles, base_pose)
