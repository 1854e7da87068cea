"""Scene manifests and task specifications.

A manifest declares the composed world: scene splats (optionally
pre-aligned), objects (splats + collision mesh + alignment + placement),
the robot description, and named cameras (exactly one must be "head").
Validation is eager and errors carry a JSON-pointer-style path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .cameras import PinholeCamera
from .transforms import RigidPose, Sim3

__all__ = [
    "ManifestError",
    "SceneEntry",
    "ObjectEntry",
    "RobotEntry",
    "SceneManifest",
    "TaskSpec",
    "load_manifest",
    "save_manifest",
    "load_task",
]


class ManifestError(ValueError):
    def __init__(self, message: str, pointer: str = ""):
        super().__init__(f"{pointer}: {message}" if pointer else message)
        self.pointer = pointer


@dataclass(frozen=True)
class SceneEntry:
    splat_path: str
    pre_align: Sim3 | None = None


@dataclass(frozen=True)
class ObjectEntry:
    name: str
    splat_path: str
    mesh_path: str
    object_align: Sim3
    placement: Sim3
    align_residual: float | None = None  # meters (symmetric chamfer at alignment time)


@dataclass(frozen=True)
class RobotEntry:
    description_path: str
    collision_spheres_path: str | None = None
    base_pose: RigidPose = field(default_factory=RigidPose.identity)
    home_q: tuple = ()


@dataclass
class SceneManifest:
    scene: SceneEntry
    objects: list  # list[ObjectEntry]
    robot: RobotEntry
    cameras: list  # list[tuple[str, PinholeCamera]], head first
    rng_seed: int = 0
    frame_label: str = "robot_base"
    base_dir: Path = field(default_factory=Path)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def object(self, name: str) -> ObjectEntry:
        for obj in self.objects:
            if obj.name == name:
                return obj
        raise KeyError(f"unknown object '{name}'")

    def camera(self, name: str) -> PinholeCamera:
        for cam_name, cam in self.cameras:
            if cam_name == name:
                return cam
        raise KeyError(f"unknown camera '{name}'")

    @property
    def head_camera(self) -> PinholeCamera:
        return self.camera("head")

    def with_placement(self, name: str, placement: Sim3) -> "SceneManifest":
        self.object(name)  # raises KeyError for unknown names
        objects = [
            replace(o, placement=placement) if o.name == name else o for o in self.objects
        ]
        return SceneManifest(
            self.scene, objects, self.robot, self.cameras,
            self.rng_seed, self.frame_label, self.base_dir,
        )

    def to_json(self) -> dict:
        doc = {
            "frame_label": self.frame_label,
            "rng_seed": self.rng_seed,
            "scene": {"splat_path": self.scene.splat_path},
            "objects": [],
            "robot": {"description_path": self.robot.description_path},
            "cameras": [dict(name=name, **cam.to_json()) for name, cam in self.cameras],
        }
        if self.scene.pre_align is not None:
            doc["scene"]["pre_align"] = self.scene.pre_align.to_json()
        for o in self.objects:
            entry = {
                "name": o.name,
                "splat_path": o.splat_path,
                "mesh_path": o.mesh_path,
                "object_align": o.object_align.to_json(),
                "placement": o.placement.to_json(),
            }
            if o.align_residual is not None:
                entry["align_residual"] = o.align_residual
            doc["objects"].append(entry)
        if self.robot.collision_spheres_path:
            doc["robot"]["collision_spheres_path"] = self.robot.collision_spheres_path
        doc["robot"]["base_pose"] = self.robot.base_pose.to_json()
        if self.robot.home_q:
            doc["robot"]["home_q"] = list(self.robot.home_q)
        return doc


def _need(doc: dict, key: str, pointer: str):
    if key not in doc:
        raise ManifestError(f"missing required field '{key}'", pointer)
    return doc[key]


def _sim3_at(doc, pointer: str) -> Sim3:
    for key in ("scale", "quat_wxyz", "t"):
        _need(doc, key, pointer)
    scale = doc["scale"]
    if not (isinstance(scale, (int, float)) and np.isfinite(scale) and scale > 0):
        raise ManifestError(f"scale must be a positive number, got {scale!r}", f"{pointer}/scale")
    try:
        return Sim3.from_json(doc)
    except (ValueError, TypeError) as e:
        raise ManifestError(str(e), pointer) from None


def _pose_at(doc, pointer: str) -> RigidPose:
    for key in ("quat_wxyz", "t"):
        _need(doc, key, pointer)
    try:
        return RigidPose.from_json(doc)
    except (ValueError, TypeError) as e:
        raise ManifestError(str(e), pointer) from None


def parse_manifest(doc: dict, base_dir: Path) -> SceneManifest:
    scene_doc = _need(doc, "scene", "")
    scene = SceneEntry(
        _need(scene_doc, "splat_path", "/scene"),
        _sim3_at(scene_doc["pre_align"], "/scene/pre_align") if "pre_align" in scene_doc else None,
    )

    objects = []
    names = set()
    for i, obj in enumerate(doc.get("objects", [])):
        ptr = f"/objects/{i}"
        name = _need(obj, "name", ptr)
        if name in names:
            raise ManifestError(f"duplicate object name '{name}'", f"{ptr}/name")
        names.add(name)
        objects.append(
            ObjectEntry(
                name,
                _need(obj, "splat_path", ptr),
                _need(obj, "mesh_path", ptr),
                _sim3_at(_need(obj, "object_align", ptr), f"{ptr}/object_align"),
                _sim3_at(_need(obj, "placement", ptr), f"{ptr}/placement"),
                float(obj["align_residual"]) if "align_residual" in obj else None,
            )
        )

    robot_doc = _need(doc, "robot", "")
    robot = RobotEntry(
        _need(robot_doc, "description_path", "/robot"),
        robot_doc.get("collision_spheres_path"),
        _pose_at(robot_doc["base_pose"], "/robot/base_pose")
        if "base_pose" in robot_doc
        else RigidPose.identity(),
        tuple(float(x) for x in robot_doc.get("home_q", ())),
    )

    cameras = []
    for i, cam in enumerate(doc.get("cameras", [])):
        ptr = f"/cameras/{i}"
        name = _need(cam, "name", ptr)
        try:
            cameras.append((name, PinholeCamera.from_json(cam)))
        except (ValueError, TypeError, KeyError) as e:
            raise ManifestError(f"invalid camera: {e}", ptr) from None
    head_count = sum(1 for name, _ in cameras if name == "head")
    if head_count != 1:
        raise ManifestError(
            f"manifest must declare exactly one camera named 'head', found {head_count}",
            "/cameras",
        )
    if cameras[0][0] != "head":
        raise ManifestError("the head camera must come first", "/cameras/0")

    manifest = SceneManifest(
        scene,
        objects,
        robot,
        cameras,
        int(doc.get("rng_seed", 0)),
        str(doc.get("frame_label", "robot_base")),
        base_dir,
    )

    missing = []
    if not manifest.resolve(scene.splat_path).exists():
        missing.append(("/scene/splat_path", scene.splat_path))
    for i, o in enumerate(manifest.objects):
        if not manifest.resolve(o.splat_path).exists():
            missing.append((f"/objects/{i}/splat_path", o.splat_path))
        if not manifest.resolve(o.mesh_path).exists():
            missing.append((f"/objects/{i}/mesh_path", o.mesh_path))
    if not manifest.resolve(robot.description_path).exists():
        missing.append(("/robot/description_path", robot.description_path))
    if robot.collision_spheres_path and not manifest.resolve(robot.collision_spheres_path).exists():
        missing.append(("/robot/collision_spheres_path", robot.collision_spheres_path))
    if missing:
        ptr, path = missing[0]
        raise ManifestError(f"referenced file does not exist: {path}", ptr)
    return manifest


def load_manifest(path) -> SceneManifest:
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest file not found: {path}")
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ManifestError(f"manifest is not valid JSON: {e}") from None
    return parse_manifest(doc, path.parent.resolve())


def save_manifest(manifest: SceneManifest, path) -> None:
    with open(path, "w") as f:
        json.dump(manifest.to_json(), f, indent=2, sort_keys=True)
        f.write("\n")


TASK_KINDS = ("grasp", "press", "push_pull")


@dataclass(frozen=True)
class TaskSpec:
    kind: str
    target_object: str
    approach_offset: RigidPose
    goal_displacement: np.ndarray | None = None  # push/pull only, meters
    randomization: dict = field(default_factory=dict)  # name -> {"translation", "yaw"}
    approach_clearance: float = 0.08
    lift_height: float = 0.10

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ManifestError(f"unknown task kind '{self.kind}'", "/kind")
        if self.kind == "push_pull":
            if self.goal_displacement is None:
                raise ManifestError("push_pull requires goal_displacement", "/goal_displacement")
            gd = np.asarray(self.goal_displacement, dtype=np.float64).reshape(3)
            if not np.all(np.isfinite(gd)):
                raise ManifestError("goal_displacement must be finite", "/goal_displacement")
            object.__setattr__(self, "goal_displacement", gd)
        elif self.goal_displacement is not None:
            raise ManifestError(
                f"goal_displacement is only valid for push_pull, not {self.kind}",
                "/goal_displacement",
            )
        for name, jitter in self.randomization.items():
            ptr = f"/randomization/{name}"
            tr = np.asarray(jitter.get("translation", [[0, 0]] * 3), dtype=np.float64)
            yaw = np.asarray(jitter.get("yaw", [0, 0]), dtype=np.float64)
            if tr.shape != (3, 2) or not np.all(np.isfinite(tr)):
                raise ManifestError("translation bounds must be finite (3, 2)", ptr)
            if yaw.shape != (2,) or not np.all(np.isfinite(yaw)):
                raise ManifestError("yaw bounds must be finite (2,)", ptr)

    def jitter_bounds(self, name: str):
        jitter = self.randomization.get(name)
        if jitter is None:
            return None
        return (
            np.asarray(jitter.get("translation", [[0, 0]] * 3), dtype=np.float64),
            np.asarray(jitter.get("yaw", [0, 0]), dtype=np.float64),
        )

    def to_json(self) -> dict:
        doc = {
            "kind": self.kind,
            "target_object": self.target_object,
            "approach_offset": self.approach_offset.to_json(),
            "randomization": self.randomization,
            "approach_clearance": self.approach_clearance,
            "lift_height": self.lift_height,
        }
        if self.goal_displacement is not None:
            doc["goal_displacement"] = self.goal_displacement.tolist()
        return doc


def load_task(source) -> TaskSpec:
    if isinstance(source, (str, Path)):
        with open(source) as f:
            doc = json.load(f)
    else:
        doc = dict(source)
    return TaskSpec(
        _need(doc, "kind", ""),
        _need(doc, "target_object", ""),
        _pose_at(_need(doc, "approach_offset", ""), "/approach_offset"),
        np.asarray(doc["goal_displacement"], dtype=np.float64)
        if "goal_displacement" in doc
        else None,
        doc.get("randomization", {}),
        float(doc.get("approach_clearance", 0.08)),
        float(doc.get("lift_height", 0.10)),
    )
