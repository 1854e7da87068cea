"""World composition and episode generation.

compose_world merges the (optionally pre-aligned) scene splats with each
object's splats mapped by placement ∘ object_align, while the object's
collision mesh is placed by the same recorded placement, so the mesh
coincides with its Gaussian cluster. Episodes play a planned trajectory
kinematically and composite a rasterized robot foreground over the splat
background render.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cameras import PinholeCamera
from .collision import ObstacleSet
from .imaging import composite
from .kinematics import KinematicChain, forward_kinematics, ik_solve, load_chain
from .manifest import SceneManifest, TaskSpec
from .meshes import TriMesh, apply_placement_to_mesh, load_mesh
from .mesh_render import rasterize_meshes
from .planning import JointTrajectory, PlanningError, RrtParams, plan_rrt
from .splat_ply import parse_splat_ply
from .splat_render import render_splats
from .splats import SplatSet, apply_sim3, merge
from .transforms import RigidPose, Sim3, quat_from_axis_angle

__all__ = [
    "AssetSet",
    "ComposedWorld",
    "Episode",
    "load_assets",
    "compose_world",
    "jitter_placement",
    "generate_episode",
    "FRAME_DT",
]

FRAME_DT = 0.05

GRASP_TOL = 0.005
PRESS_TOL = 0.003
PUSH_TOL = 0.010


@dataclass
class AssetSet:
    """Assets loaded once per manifest: canonical splats/meshes plus the
    robot model."""

    scene_splats: SplatSet                 # pre-aligned and relabeled
    object_splats: dict                    # name -> SplatSet (canonical frame)
    object_meshes: dict                    # name -> TriMesh (canonical frame)
    chain: KinematicChain
    base_pose: RigidPose
    home_q: np.ndarray


@dataclass
class ComposedWorld:
    splats: SplatSet
    obstacles: ObstacleSet
    meshes: dict        # name -> placed TriMesh (world frame)
    transforms: dict    # name -> splat transform (placement ∘ object_align)
    placements: dict    # name -> placement Sim3
    assets: AssetSet | None = None

    def __iter__(self):
        return iter((self.splats, self.obstacles))


def load_assets(manifest: SceneManifest) -> AssetSet:
    with open(manifest.resolve(manifest.scene.splat_path), "rb") as f:
        scene = parse_splat_ply(f.read())
    if manifest.scene.pre_align is not None:
        scene = apply_sim3(scene, manifest.scene.pre_align)
    scene = scene.relabel(manifest.frame_label)

    object_splats = {}
    object_meshes = {}
    for obj in manifest.objects:
        with open(manifest.resolve(obj.splat_path), "rb") as f:
            object_splats[obj.name] = parse_splat_ply(f.read())
        object_meshes[obj.name] = load_mesh(manifest.resolve(obj.mesh_path), obj.name)

    spheres_path = (
        manifest.resolve(manifest.robot.collision_spheres_path)
        if manifest.robot.collision_spheres_path
        else None
    )
    chain = load_chain(manifest.resolve(manifest.robot.description_path), spheres_path)
    home_q = np.asarray(manifest.robot.home_q or np.zeros(chain.dof), dtype=np.float64)
    return AssetSet(scene, object_splats, object_meshes, chain, manifest.robot.base_pose, home_q)


def _compose(
    manifest: SceneManifest,
    assets: AssetSet,
    placements: dict | None = None,
    deltas: dict | None = None,
    skip_obstacles: tuple = (),
) -> ComposedWorld:
    placements = placements or {o.name: o.placement for o in manifest.objects}
    deltas = deltas or {}
    label = manifest.frame_label

    sets = [assets.scene_splats]
    placed_meshes = {}
    transforms = {}
    obstacle_instances = []
    for obj in manifest.objects:
        placement = placements[obj.name]
        delta = deltas.get(obj.name)
        if delta is not None:
            placement = delta.to_sim3() @ placement
        splat_tf = placement @ obj.object_align
        transforms[obj.name] = splat_tf
        sets.append(apply_sim3(assets.object_splats[obj.name], splat_tf).relabel(label))
        placed = apply_placement_to_mesh(assets.object_meshes[obj.name], placement)
        placed_meshes[obj.name] = placed
        if obj.name not in skip_obstacles:
            obstacle_instances.append((placed, RigidPose.identity()))

    world = merge(sets)
    return ComposedWorld(
        world, ObstacleSet(obstacle_instances), placed_meshes, transforms, dict(placements), assets
    )


def compose_world(manifest: SceneManifest, assets: AssetSet | None = None) -> ComposedWorld:
    """Compose the unified splat world and the obstacle set from a manifest.

    Unpacks as (SplatSet, ObstacleSet)."""
    if assets is None:
        assets = load_assets(manifest)
    return _compose(manifest, assets)


def jitter_placement(placement: Sim3, translation: np.ndarray, yaw: float) -> Sim3:
    """Rotate the placed object about the world z axis at its own placed
    origin, then translate; scale is untouched."""
    rz = quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), yaw)
    rz_mat = Sim3(1.0, rz, np.zeros(3)).matrix3
    t0 = placement.translation
    jitter = Sim3(1.0, rz, t0 - rz_mat @ t0 + np.asarray(translation, dtype=np.float64))
    return jitter @ placement


@dataclass
class Episode:
    frames: list                 # composited (H, W, 3) arrays
    joint_positions: np.ndarray  # (N, dof)
    gripper: np.ndarray          # (N,) 0 open / 1 closed
    metadata: dict

    @property
    def success(self) -> bool:
        return bool(self.metadata["success"])

    def __len__(self) -> int:
        return len(self.frames)


def _failed_episode(seed: int, task: TaskSpec, stage: str, detail: str) -> Episode:
    return Episode(
        [],
        np.zeros((0, 0)),
        np.zeros(0, dtype=np.int64),
        {
            "seed": seed,
            "task": task.to_json(),
            "success": False,
            "failure_stage": stage,
            "failure_detail": detail,
            "dt": FRAME_DT,
            "camera_poses": [],
            "placements": {},
        },
    )


def _solve_keypose(chain, target, init, obstacles, base_pose, rng, attempts: int = 12):
    """IK solutions are drawn until one is both converged and
    collision-free (deterministic via the episode rng); returns
    (IkResult | best-effort, collision_free flag)."""
    from .collision import check_collision

    best = None
    lim = chain.limits
    q0 = np.asarray(init, dtype=np.float64)
    for attempt in range(attempts):
        res = ik_solve(chain, target, q0, base_pose=base_pose)
        if res.converged and not check_collision(chain, res.q, obstacles, base_pose):
            return res, True
        if best is None or (res.converged and not best.converged) or (
            res.converged == best.converged
            and res.pos_error + res.rot_error < best.pos_error + best.rot_error
        ):
            best = res
        q0 = rng.uniform(lim[:, 0], lim[:, 1])
    return best, False


def _plan_segment(chain, q_from, q_to, obstacles, base_pose, rng, rrt: RrtParams):
    params = RrtParams(
        step_size=rrt.step_size,
        goal_bias=rrt.goal_bias,
        max_samples=rrt.max_samples,
        seed=int(rng.integers(0, 2 ** 31 - 1)),
        shortcut_attempts=rrt.shortcut_attempts,
        collision_inflate=rrt.collision_inflate,
    )
    return plan_rrt(chain, q_from, q_to, obstacles, params, base_pose, dt=FRAME_DT)


def generate_episode(
    world: ComposedWorld | None,
    manifest: SceneManifest,
    task: TaskSpec,
    seed: int,
    rrt_params: RrtParams | None = None,
    render: bool = True,
) -> Episode:
    """Jitter placements, solve IK for the task keyposes, plan through
    them, play the trajectory kinematically, and hybrid-render each
    timestep. IK or planning failure marks the episode failed with a
    stage tag; no frames are fabricated. Deterministic per seed."""
    assets = world.assets if world is not None and world.assets is not None else None
    if assets is None:
        assets = load_assets(manifest)
    chain = assets.chain
    base_pose = assets.base_pose
    rng = np.random.default_rng(seed)
    rrt = rrt_params or RrtParams()

    try:
        manifest.object(task.target_object)
    except KeyError:
        return _failed_episode(seed, task, "task", f"unknown target object '{task.target_object}'")

    placements = {}
    for obj in manifest.objects:
        placement = obj.placement
        bounds = task.jitter_bounds(obj.name)
        if bounds is not None:
            tr_b, yaw_b = bounds
            dt_vec = rng.uniform(tr_b[:, 0], tr_b[:, 1])
            yaw = float(rng.uniform(yaw_b[0], yaw_b[1]))
            placement = jitter_placement(placement, dt_vec, yaw)
        placements[obj.name] = placement

    # obstacles exclude the manipulated object: the task's whole point is
    # to reach it, and after closure it travels with the gripper
    composed = _compose(manifest, assets, placements, skip_obstacles=(task.target_object,))
    obstacles = composed.obstacles

    target_placement = placements[task.target_object]
    obj_frame = RigidPose(target_placement.rotation, target_placement.translation)
    t_goal = obj_frame @ task.approach_offset
    t_pre = t_goal @ RigidPose(translation=np.array([0.0, 0.0, -task.approach_clearance]))

    ik_pre, pre_ok = _solve_keypose(chain, t_pre, assets.home_q, obstacles, base_pose, rng)
    if not (ik_pre.converged and pre_ok):
        return _failed_episode(
            seed, task, "ik" if not ik_pre.converged else "plan",
            f"pre-approach keypose unreachable (pos {ik_pre.pos_error:.4g} m, "
            f"rot {ik_pre.rot_error:.4g} rad, collision-free={pre_ok})",
        )
    ik_goal, goal_ok = _solve_keypose(chain, t_goal, ik_pre.q, obstacles, base_pose, rng)
    if not (ik_goal.converged and goal_ok):
        return _failed_episode(
            seed, task, "ik" if not ik_goal.converged else "plan",
            f"target keypose unreachable (pos {ik_goal.pos_error:.4g} m, "
            f"rot {ik_goal.rot_error:.4g} rad, collision-free={goal_ok})",
        )

    try:
        seg_approach = _plan_segment(chain, assets.home_q, ik_pre.q, obstacles, base_pose, rng, rrt)
        seg_reach = _plan_segment(chain, ik_pre.q, ik_goal.q, obstacles, base_pose, rng, rrt)
    except PlanningError as e:
        return _failed_episode(seed, task, "plan", str(e))

    waypoints = list(seg_approach.waypoints) + list(seg_reach.waypoints[1:])
    contact_index = len(waypoints) - 1
    gripper_close_index = None
    attach_index = None
    targets = {"goal_pose": t_goal.to_json(), "pre_pose": t_pre.to_json()}

    if task.kind == "grasp":
        waypoints.append(ik_goal.q.copy())  # hold while the gripper closes
        gripper_close_index = len(waypoints) - 1
        attach_index = gripper_close_index
        t_lift = RigidPose(
            t_goal.rotation, t_goal.translation + np.array([0.0, 0.0, task.lift_height])
        )
        targets["lift_pose"] = t_lift.to_json()
        ik_lift, lift_ok = _solve_keypose(chain, t_lift, ik_goal.q, obstacles, base_pose, rng)
        if not (ik_lift.converged and lift_ok):
            return _failed_episode(
                seed, task, "ik" if not ik_lift.converged else "plan",
                f"lift keypose unreachable (pos {ik_lift.pos_error:.4g} m, "
                f"collision-free={lift_ok})",
            )
        try:
            seg_lift = _plan_segment(chain, ik_goal.q, ik_lift.q, obstacles, base_pose, rng, rrt)
        except PlanningError as e:
            return _failed_episode(seed, task, "plan", str(e))
        waypoints += list(seg_lift.waypoints[1:])
    elif task.kind == "push_pull":
        gripper_close_index = contact_index
        attach_index = contact_index
        t_push = RigidPose(t_goal.rotation, t_goal.translation + task.goal_displacement)
        targets["push_goal_pose"] = t_push.to_json()
        ik_push, push_ok = _solve_keypose(chain, t_push, ik_goal.q, obstacles, base_pose, rng)
        if not (ik_push.converged and push_ok):
            return _failed_episode(
                seed, task, "ik" if not ik_push.converged else "plan",
                f"push goal keypose unreachable (pos {ik_push.pos_error:.4g} m, "
                f"collision-free={push_ok})",
            )
        try:
            seg_push = _plan_segment(chain, ik_goal.q, ik_push.q, obstacles, base_pose, rng, rrt)
        except PlanningError as e:
            return _failed_episode(seed, task, "plan", str(e))
        waypoints += list(seg_push.waypoints[1:])

    waypoints = np.asarray(waypoints)
    n = len(waypoints)
    gripper = np.zeros(n, dtype=np.int64)
    if gripper_close_index is not None:
        gripper[gripper_close_index:] = 1

    # forward kinematics for every frame
    link_poses_per_frame = []
    ee_per_frame = []
    for q in waypoints:
        poses, ee = forward_kinematics(chain, q, base_pose)
        link_poses_per_frame.append(poses)
        ee_per_frame.append(ee)

    success, predicate = _evaluate_success(task, ee_per_frame, t_goal, contact_index, n)

    cam = manifest.head_camera
    frames = []
    if render:
        frames = _render_frames(
            manifest, assets, placements, task, cam,
            waypoints, link_poses_per_frame, ee_per_frame, attach_index,
        )

    metadata = {
        "seed": seed,
        "task": task.to_json(),
        "success": success,
        "failure_stage": None,
        "success_predicate": predicate,
        "dt": FRAME_DT,
        "keyframes": {
            "contact": contact_index,
            "gripper_close": gripper_close_index,
            "end": n - 1,
        },
        "targets": targets,
        "camera": cam.to_json(),
        "camera_poses": [cam.pose.to_json() for _ in range(n)],
        "placements": {name: p.to_json() for name, p in placements.items()},
    }
    return Episode(frames, waypoints, gripper, metadata)


def _evaluate_success(task, ee_per_frame, t_goal, contact_index, n):
    if task.kind == "grasp":
        err = float(np.linalg.norm(ee_per_frame[contact_index].translation - t_goal.translation))
        return err <= GRASP_TOL, {"kind": "grasp", "position_error": err, "tolerance": GRASP_TOL}
    if task.kind == "press":
        err = float(np.linalg.norm(ee_per_frame[-1].translation - t_goal.translation))
        return err <= PRESS_TOL, {"kind": "press", "position_error": err, "tolerance": PRESS_TOL}
    moved = ee_per_frame[-1].translation - ee_per_frame[contact_index].translation
    err = float(np.linalg.norm(moved - task.goal_displacement))
    return err <= PUSH_TOL, {"kind": "push_pull", "displacement_error": err, "tolerance": PUSH_TOL}


def _render_frames(
    manifest, assets, placements, task, cam,
    waypoints, link_poses_per_frame, ee_per_frame, attach_index,
):
    chain = assets.chain
    frames = []
    background = None
    ee_attach = ee_per_frame[attach_index] if attach_index is not None else None

    for idx in range(len(waypoints)):
        delta = None
        if attach_index is not None and idx > attach_index:
            delta = ee_per_frame[idx] @ ee_attach.inverse()
        if background is None or delta is not None:
            composed = _compose(
                manifest, assets, placements,
                deltas={task.target_object: delta} if delta is not None else None,
            )
            background, _ = render_splats(composed.splats, cam)

        instances = []
        for link, pose in zip(chain.links, link_poses_per_frame[idx]):
            for spec, mesh in zip(link.visuals, link.meshes):
                instances.append((mesh, pose, spec.color))
        robot_img, robot_mask, _ = rasterize_meshes(instances, cam)
        frames.append(composite(robot_img, robot_mask, background))
    return frames
