"""Synthetic scene generation: a splat room, splat+mesh objects, and a
six-joint arm, written out as a complete manifest directory.

Used by the demo scripts and the test fixtures; everything is
deterministic per seed.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .cameras import PinholeCamera, look_at_pose
from .meshes import TriMesh, box_mesh, sample_mesh_points, save_obj
from .registration import chamfer_distance
from .sh import SH_C0
from .splat_ply import write_splat_ply
from .splats import SplatSet, apply_sim3, sample_points
from .transforms import RigidPose, Sim3, quat_from_axis_angle, quat_from_rpy

__all__ = [
    "room_splats",
    "object_splats_on_mesh",
    "arm_urdf",
    "arm_collision_spheres",
    "write_demo_scene",
]


def _dc_for_color(colors: np.ndarray) -> np.ndarray:
    """DC coefficients that render as the given rgb under eval_sh."""
    return (np.asarray(colors, dtype=np.float64) - 0.5) / SH_C0


def room_splats(seed: int = 0, frame_label: str = "robot_base") -> SplatSet:
    """Tabletop + back wall as a flat splat carpet with checkered color."""
    rng = np.random.default_rng(seed)

    xs = np.arange(-0.25, 0.96, 0.035)
    ys = np.arange(-0.70, 0.71, 0.035)
    gx, gy = np.meshgrid(xs, ys)
    floor = np.stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)], axis=1)
    checker = ((gx / 0.14).astype(int) + (gy / 0.14).astype(int)) % 2
    floor_colors = np.where(
        checker.ravel()[:, None], [0.55, 0.52, 0.48], [0.35, 0.36, 0.40]
    )

    wx = np.arange(-0.7, 0.71, 0.06)
    wz = np.arange(0.0, 0.55, 0.06)
    gxw, gzw = np.meshgrid(wx, wz)
    wall = np.stack([np.full(gxw.size, 1.0), gxw.ravel(), gzw.ravel()], axis=1)
    wall_colors = np.tile([0.6, 0.63, 0.68], (len(wall), 1))

    means = np.concatenate([floor, wall])
    colors = np.concatenate([floor_colors, wall_colors])
    colors = np.clip(colors + rng.normal(scale=0.02, size=colors.shape), 0.05, 0.95)
    n = len(means)

    log_scales = np.tile(np.log([0.022, 0.022, 0.004]), (n, 1))
    # orient the thin axis along each surface normal
    rotations = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
    wall_rot = quat_from_axis_angle(np.array([0.0, 1.0, 0.0]), np.pi / 2)
    rotations[len(floor):] = wall_rot

    sh = _dc_for_color(colors)[:, None, :]
    opacity = np.full(n, 4.0)
    return SplatSet(means, log_scales, rotations, opacity, sh, 0, frame_label)


def object_splats_on_mesh(
    mesh: TriMesh, color, n: int, seed: int, frame_label: str = ""
) -> SplatSet:
    """Splats whose means lie on the mesh surface (area-weighted)."""
    rng = np.random.default_rng(seed)
    pts = sample_mesh_points(mesh, n, seed).points
    colors = np.clip(
        np.asarray(color, dtype=np.float64) + rng.normal(scale=0.03, size=(n, 3)),
        0.05,
        0.95,
    )
    log_scales = np.tile(np.log([0.010, 0.010, 0.004]), (n, 1))
    quats = rng.normal(size=(n, 4))
    return SplatSet(
        pts,
        log_scales,
        quats,
        np.full(n, 3.0),
        _dc_for_color(colors)[:, None, :],
        0,
        frame_label,
    )


ARM_SEGMENTS = (
    # (joint origin z offset, axis, lower, upper, link cylinder length)
    (0.10, (0, 0, 1), -3.0, 3.0, 0.05),
    (0.05, (0, 1, 0), -2.2, 2.2, 0.30),
    (0.30, (0, 1, 0), -2.5, 2.5, 0.25),
    (0.25, (0, 1, 0), -2.5, 2.5, 0.08),
    (0.08, (0, 0, 1), -3.0, 3.0, 0.06),
    (0.06, (0, 1, 0), -2.5, 2.5, 0.06),
)

ARM_HOME_Q = (0.0, 0.75, 1.15, 0.85, 0.0, 0.0)


def arm_urdf(name: str = "arm6") -> str:
    """Six-revolute serial arm with cylinder visuals, reach about 0.75 m."""
    lines = [f'<robot name="{name}">']
    lines.append(
        '  <link name="base_link">\n'
        '    <visual><origin xyz="0 0 0.05"/>'
        '<geometry><cylinder radius="0.045" length="0.1"/></geometry>'
        '<material name=""><color rgba="0.25 0.25 0.28 1"/></material></visual>\n'
        "  </link>"
    )
    parent = "base_link"
    for i, (dz, axis, lo, hi, length) in enumerate(ARM_SEGMENTS, start=1):
        link = f"link{i}"
        color = "0.8 0.45 0.15 1" if i % 2 else "0.75 0.75 0.78 1"
        lines.append(
            f'  <link name="{link}">\n'
            f'    <visual><origin xyz="0 0 {length / 2}"/>'
            f'<geometry><cylinder radius="0.030" length="{length}"/></geometry>'
            f'<material name=""><color rgba="{color}"/></material></visual>\n'
            "  </link>"
        )
        lines.append(
            f'  <joint name="joint{i}" type="revolute">\n'
            f'    <origin xyz="0 0 {dz}"/>\n'
            f'    <parent link="{parent}"/>\n'
            f'    <child link="{link}"/>\n'
            f'    <axis xyz="{axis[0]} {axis[1]} {axis[2]}"/>\n'
            f'    <limit lower="{lo}" upper="{hi}"/>\n'
            "  </joint>"
        )
        parent = link
    lines.append(
        '  <link name="gripper"/>\n'
        '  <joint name="ee_fixed" type="fixed">\n'
        '    <origin xyz="0 0 0.06"/>\n'
        f'    <parent link="{parent}"/>\n'
        '    <child link="gripper"/>\n'
        "  </joint>"
    )
    lines.append("</robot>")
    return "\n".join(lines) + "\n"


def arm_collision_spheres() -> dict:
    spheres = {"base_link": [{"center": [0.0, 0.0, 0.05], "radius": 0.055}]}
    for i, (_, _, _, _, length) in enumerate(ARM_SEGMENTS, start=1):
        link = []
        steps = max(1, int(round(length / 0.06)))
        for k in range(steps):
            z = (k + 0.5) * length / steps
            link.append({"center": [0.0, 0.0, z], "radius": 0.042})
        spheres[f"link{i}"] = link
    return spheres


def _object_bundle(out_dir: Path, name, size, color, align: Sim3, placement: Sim3, seed):
    mesh = box_mesh(size, label=name)
    splats_mesh_frame = object_splats_on_mesh(mesh, color, 220, seed)
    splats_canonical = apply_sim3(splats_mesh_frame, align.inverse())

    with open(out_dir / f"{name}.ply", "wb") as f:
        f.write(write_splat_ply(splats_canonical))
    save_obj(out_dir / f"{name}.obj", mesh)

    aligned = apply_sim3(splats_canonical, align)
    residual = chamfer_distance(
        sample_points(aligned, 2000, seed + 10).points,
        sample_mesh_points(mesh, 2000, seed + 11).points,
    )
    return {
        "name": name,
        "splat_path": f"{name}.ply",
        "mesh_path": f"{name}.obj",
        "object_align": align.to_json(),
        "placement": placement.to_json(),
        "align_residual": residual,
    }


def write_demo_scene(out_dir, seed: int = 0) -> Path:
    """Write scene splats, two objects, the arm, and a manifest; returns
    the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    scene = room_splats(seed)
    with open(out_dir / "scene.ply", "wb") as f:
        f.write(write_splat_ply(scene))

    align1 = Sim3(1.25, quat_from_axis_angle(np.array([0.2, 0.1, 1.0]), 0.7), [0.05, -0.03, 0.02])
    align2 = Sim3(0.8, quat_from_axis_angle(np.array([1.0, 0.0, 0.3]), -0.4), [-0.02, 0.04, 0.01])
    place1 = Sim3(1.0, quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), 0.3), [0.45, 0.18, 0.031])
    place2 = Sim3(1.0, quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), -0.5), [0.42, -0.22, 0.026])

    objects = [
        _object_bundle(out_dir, "crate", [0.062, 0.062, 0.062], [0.75, 0.25, 0.15],
                       align1, place1, seed + 1),
        _object_bundle(out_dir, "puck", [0.070, 0.070, 0.052], [0.15, 0.35, 0.75],
                       align2, place2, seed + 2),
    ]

    (out_dir / "arm.urdf").write_text(arm_urdf())
    with open(out_dir / "arm_spheres.json", "w") as f:
        json.dump(arm_collision_spheres(), f, indent=2)

    cam_pose = look_at_pose([-0.38, 0.0, 0.62], [0.45, 0.0, 0.0])
    head = PinholeCamera(130.0, 130.0, 80.0, 60.0, 160, 120, cam_pose)

    manifest = {
        "frame_label": "robot_base",
        "rng_seed": seed,
        "scene": {"splat_path": "scene.ply"},
        "objects": objects,
        "robot": {
            "description_path": "arm.urdf",
            "collision_spheres_path": "arm_spheres.json",
            "home_q": list(ARM_HOME_Q),
        },
        "cameras": [dict(name="head", **head.to_json())],
    }
    manifest_path = out_dir / "manifest.json"
    with open(manifest_path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest_path


def grasp_task(target: str = "crate", jitter: bool = True) -> dict:
    """Top-down grasp task document for the demo scene."""
    offset = RigidPose(quat_from_rpy(np.pi, 0.0, 0.0), np.zeros(3))
    doc = {
        "kind": "grasp",
        "target_object": target,
        "approach_offset": offset.to_json(),
        "approach_clearance": 0.08,
        "lift_height": 0.10,
        "randomization": {},
    }
    if jitter:
        doc["randomization"] = {
            target: {
                "translation": [[-0.04, 0.04], [-0.05, 0.05], [0.0, 0.0]],
                "yaw": [-0.4, 0.4],
            }
        }
    return doc
