"""Command-line entry point for every pipeline stage.

Subcommands: align-scene, align-object, calibrate, compose, render,
plan, generate, serve. Transforms are written as JSON
{scale, quat_wxyz, t} (rigid poses drop the scale key).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np


def _load_json(path):
    with open(path) as f:
        return json.load(f)


def _dump_json(doc, path):
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def _read_cloud(path, crop_path=None):
    from .pointcloud import crop_cloud, read_cloud_ply

    with open(path, "rb") as f:
        cloud = read_cloud_ply(f.read(), Path(path).stem)
    if crop_path:
        crop = _load_json(crop_path)
        cloud = crop_cloud(cloud, crop["min"], crop["max"])
    return cloud


def _icp_params(config_path):
    from .registration import IcpParams

    if not config_path:
        return IcpParams()
    doc = _load_json(config_path)
    fields = {k: doc[k] for k in
              ("max_iterations", "convergence_eps", "max_correspondence_dist", "trim_fraction")
              if k in doc}
    return IcpParams(**fields)


def _rrt_params(config_path, seed):
    from .planning import RrtParams

    doc = _load_json(config_path) if config_path else {}
    fields = {k: doc[k] for k in
              ("step_size", "goal_bias", "max_samples", "shortcut_attempts",
               "collision_inflate") if k in doc}
    return RrtParams(seed=seed, **fields)


def cmd_align_scene(args):
    from .registration import scaled_icp
    from .transforms import Sim3

    src = _read_cloud(args.src, args.src_crop)
    dst = _read_cloud(args.dst, args.dst_crop)
    init = Sim3.from_json(_load_json(args.init)) if args.init else Sim3.identity()
    result = scaled_icp(src, dst, init, _icp_params(args.config))
    doc = result.transform.to_json()
    doc["residual"] = result.residual
    doc["iterations"] = result.iterations
    _dump_json(doc, args.out)
    print(f"aligned {args.src} -> {args.dst}: scale {result.transform.scale:.6f}, "
          f"residual {result.residual:.3e} ({result.iterations} iterations)")


def cmd_align_object(args):
    from .meshes import load_mesh, sample_mesh_points
    from .registration import chamfer_distance, scaled_icp, umeyama_sim3
    from .splat_ply import parse_splat_ply
    from .splats import apply_sim3, sample_points

    with open(args.splats, "rb") as f:
        splats = parse_splat_ply(f.read())
    mesh = load_mesh(args.mesh)
    kp = _load_json(args.keypoints)
    init = umeyama_sim3(np.asarray(kp["splat_points"]), np.asarray(kp["mesh_points"]))

    src = sample_points(splats, args.samples, args.seed)
    dst = sample_mesh_points(mesh, args.samples, args.seed + 1)
    result = scaled_icp(src, dst, init, _icp_params(args.config))

    aligned = apply_sim3(splats, result.transform)
    residual = chamfer_distance(
        sample_points(aligned, args.samples, args.seed + 2).points, dst.points
    )
    doc = result.transform.to_json()
    doc["icp_residual"] = result.residual
    doc["align_residual"] = residual
    _dump_json(doc, args.out)
    print(f"object aligned: scale {result.transform.scale:.6f}, "
          f"chamfer residual {residual:.4e} m")


def cmd_calibrate(args):
    from .calibration import hand_eye_tsai_lenz, motion_pairs_from_stations
    from .transforms import RigidPose

    stations = [
        (RigidPose.from_json(s["gripper_pose"]), RigidPose.from_json(s["target_in_camera"]))
        for s in _load_json(args.stations)
    ]
    result = hand_eye_tsai_lenz(motion_pairs_from_stations(stations))
    doc = result.transform.to_json()
    doc["rotation_residual"] = result.rotation_residual
    doc["translation_residual"] = result.translation_residual
    _dump_json(doc, args.out)
    print(f"hand-eye solved from {len(stations)} stations: "
          f"residual {result.rotation_residual:.3e} rad / {result.translation_residual:.3e} m")


def cmd_compose(args):
    from .manifest import load_manifest
    from .meshes import save_obj
    from .pipeline import compose_world
    from .splat_ply import write_splat_ply

    manifest = load_manifest(args.manifest)
    world = compose_world(manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "world.ply", "wb") as f:
        f.write(write_splat_ply(world.splats))
    obstacle_dir = out / "obstacles"
    obstacle_dir.mkdir(exist_ok=True)
    for name, mesh in world.meshes.items():
        save_obj(obstacle_dir / f"{name}.obj", mesh)
    _dump_json(
        {
            "splats": len(world.splats),
            "objects": {name: len(mesh.triangles) for name, mesh in world.meshes.items()},
        },
        out / "composed.json",
    )
    print(f"composed {len(world.splats)} splats and {len(world.meshes)} obstacle meshes -> {out}")


def cmd_render(args):
    from .imaging import save_png
    from .manifest import load_manifest
    from .pipeline import compose_world
    from .splat_render import render_splats

    manifest = load_manifest(args.manifest)
    cam = manifest.camera(args.camera).scaled(args.down)
    world = compose_world(manifest)
    rgb, _ = render_splats(world.splats, cam)
    save_png(args.out, rgb)
    print(f"rendered camera '{args.camera}' at {cam.width}x{cam.height} -> {args.out}")


def cmd_plan(args):
    from .manifest import load_manifest, load_task
    from .pipeline import compose_world, generate_episode
    from .planning import write_trajectory_json, JointTrajectory

    manifest = load_manifest(args.manifest)
    task = load_task(args.task)
    world = compose_world(manifest)
    episode = generate_episode(
        world, manifest, task, args.seed,
        rrt_params=_rrt_params(args.config, args.seed), render=False,
    )
    if episode.metadata.get("failure_stage"):
        print(f"planning failed at stage '{episode.metadata['failure_stage']}': "
              f"{episode.metadata.get('failure_detail')}", file=sys.stderr)
        return 1
    traj = JointTrajectory(episode.joint_positions, episode.metadata["dt"])
    _dump_json(write_trajectory_json(traj), args.out)
    print(f"planned {len(traj)} waypoints -> {args.out}")
    return 0


def cmd_generate(args):
    from .dataset import generate_dataset
    from .manifest import load_task

    task = load_task(args.task)
    index = generate_dataset(
        args.manifest, task, args.count, args.out,
        base_seed=args.seed, workers=args.workers,
    )
    print(f"generated {index['count']} episodes "
          f"({index['successes']} successful) -> {args.out}")


def cmd_serve(args):
    import uvicorn

    from .service import create_app

    app = create_app(args.manifest)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splatworld",
        description="Align splat assets to the robot frame, compose worlds, "
                    "plan motion, and generate hybrid-rendered datasets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("align-scene", help="scaled ICP between two point clouds")
    p.add_argument("--src", required=True, help="source cloud (xyz PLY)")
    p.add_argument("--dst", required=True, help="destination cloud (xyz PLY)")
    p.add_argument("--src-crop", help="JSON {min, max} box applied to src")
    p.add_argument("--dst-crop", help="JSON {min, max} box applied to dst")
    p.add_argument("--init", help="initial Sim3 JSON")
    p.add_argument("--config", help="ICP parameter overrides (JSON)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_align_scene)

    p = sub.add_parser("align-object", help="keypoint similarity fit + ICP refinement")
    p.add_argument("--splats", required=True, help="object splat PLY")
    p.add_argument("--mesh", required=True, help="object mesh (OBJ/STL)")
    p.add_argument("--keypoints", required=True,
                   help="JSON {splat_points: [[x,y,z]...], mesh_points: [[x,y,z]...]}")
    p.add_argument("--samples", type=int, default=4000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="ICP parameter overrides (JSON)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_align_object)

    p = sub.add_parser("calibrate", help="Tsai-Lenz hand-eye from pose stations")
    p.add_argument("--stations", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("compose", help="merge scene + objects; export world PLY + obstacles")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("render", help="render the composed world from a manifest camera")
    p.add_argument("--manifest", required=True)
    p.add_argument("--camera", default="head")
    p.add_argument("--down", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("plan", help="plan a task trajectory; write JSON")
    p.add_argument("--manifest", required=True)
    p.add_argument("--task", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="RRT parameter overrides (JSON)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("generate", help="generate an episode dataset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--task", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("serve", help="start the interactive preview service")
    p.add_argument("--manifest", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args) or 0


if __name__ == "__main__":
    sys.exit(main())
