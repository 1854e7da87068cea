"""Serial-revolute robot model: URDF-subset parsing, forward kinematics,
and damped-least-squares inverse kinematics.

The chain is a single branch of revolute joints (fixed joints are folded
into the neighboring transforms). Collision geometry is a per-link
sphere set supplied by a sidecar document; visual geometry comes from
URDF box/cylinder/sphere primitives or mesh files.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .meshes import TriMesh, box_mesh, cylinder_mesh, icosphere_mesh, load_mesh
from .transforms import (
    RigidPose,
    quat_from_axis_angle,
    quat_from_rpy,
    quat_to_matrix,
    quat_to_rotvec,
)

__all__ = [
    "Joint",
    "LinkGeometry",
    "KinematicChain",
    "RobotModelError",
    "parse_chain",
    "serialize_chain",
    "load_chain",
    "forward_kinematics",
    "IkResult",
    "ik_solve",
]


class RobotModelError(ValueError):
    """Raised for robot descriptions outside the supported subset."""


@dataclass(frozen=True)
class VisualSpec:
    kind: str            # "box" | "cylinder" | "sphere" | "mesh"
    params: tuple        # box: (sx, sy, sz); cylinder: (r, l); sphere: (r,); mesh: (path,)
    origin: RigidPose
    color: tuple = (0.7, 0.7, 0.7)

    def build_mesh(self, base_dir: Path | None = None) -> TriMesh:
        if self.kind == "box":
            mesh = box_mesh(self.params)
        elif self.kind == "cylinder":
            r, l = self.params
            mesh = cylinder_mesh(r, l)
            mesh = TriMesh(mesh.vertices - np.array([0.0, 0.0, l / 2.0]), mesh.triangles)
        elif self.kind == "sphere":
            mesh = icosphere_mesh(self.params[0], 1)
        elif self.kind == "mesh":
            path = Path(self.params[0])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            mesh = load_mesh(path)
        else:
            raise RobotModelError(f"unknown visual kind '{self.kind}'")
        return TriMesh(self.origin.apply(mesh.vertices), mesh.triangles)


@dataclass(frozen=True)
class Joint:
    name: str
    origin: RigidPose      # fixed transform from parent link frame
    axis: np.ndarray       # unit, in the child link frame
    lower: float
    upper: float
    child_link: str

    def __post_init__(self):
        a = np.asarray(self.axis, dtype=np.float64).reshape(3)
        n = np.linalg.norm(a)
        if n < 1e-12:
            raise RobotModelError(f"joint '{self.name}' has a zero axis")
        object.__setattr__(self, "axis", a / n)
        if not self.lower < self.upper:
            raise RobotModelError(
                f"joint '{self.name}' limits must satisfy lower < upper "
                f"({self.lower} vs {self.upper})"
            )


@dataclass
class LinkGeometry:
    name: str
    visuals: list = field(default_factory=list)     # list[VisualSpec]
    spheres: list = field(default_factory=list)     # list[(center (3,), radius)]
    meshes: list = field(default_factory=list)      # built TriMesh per visual


@dataclass
class KinematicChain:
    name: str
    joints: list            # list[Joint], base to tip
    links: list              # list[LinkGeometry], length len(joints)+1, base first
    ee_transform: RigidPose  # fixed transform from the last link to the end effector

    @property
    def dof(self) -> int:
        return len(self.joints)

    @property
    def limits(self) -> np.ndarray:
        return np.array([[j.lower, j.upper] for j in self.joints])

    def within_limits(self, q: np.ndarray, atol: float = 1e-12) -> bool:
        q = np.asarray(q, dtype=np.float64)
        lim = self.limits
        return bool(np.all(q >= lim[:, 0] - atol) and np.all(q <= lim[:, 1] + atol))

    def clamp(self, q: np.ndarray) -> np.ndarray:
        lim = self.limits
        return np.clip(q, lim[:, 0], lim[:, 1])

    def collision_arrays(self):
        """Flattened collision spheres: (link ids, local centers, radii)."""
        cached = self.__dict__.get("_collision_cache")
        if cached is None:
            link_ids, centers, radii = [], [], []
            for li, link in enumerate(self.links):
                for c, r in link.spheres:
                    link_ids.append(li)
                    centers.append(np.asarray(c, dtype=np.float64))
                    radii.append(float(r))
            cached = (
                np.asarray(link_ids, dtype=np.int64),
                np.asarray(centers, dtype=np.float64).reshape(-1, 3),
                np.asarray(radii, dtype=np.float64),
            )
            self.__dict__["_collision_cache"] = cached
        return cached

    def _fk_constants(self):
        cached = self.__dict__.get("_fk_const_cache")
        if cached is None:
            origin_r = np.stack([j.origin.matrix3 for j in self.joints]) if self.joints else np.zeros((0, 3, 3))
            origin_t = np.stack([j.origin.translation for j in self.joints]) if self.joints else np.zeros((0, 3))
            axes = np.stack([j.axis for j in self.joints]) if self.joints else np.zeros((0, 3))
            skews = np.zeros((self.dof, 3, 3))
            if self.dof:
                skews[:, 0, 1] = -axes[:, 2]
                skews[:, 0, 2] = axes[:, 1]
                skews[:, 1, 0] = axes[:, 2]
                skews[:, 1, 2] = -axes[:, 0]
                skews[:, 2, 0] = -axes[:, 1]
                skews[:, 2, 1] = axes[:, 0]
            outer = np.einsum("ni,nj->nij", axes, axes)
            cached = (origin_r, origin_t, skews, outer)
            self.__dict__["_fk_const_cache"] = cached
        return cached

    def fk_frames(self, q: np.ndarray, base_pose: RigidPose | None = None):
        """Array fast path for forward kinematics: per-link rotation
        matrices (L, 3, 3) and translations (L, 3), base link first."""
        rot, trans = self.fk_frames_batch(np.asarray(q, dtype=np.float64)[None, :], base_pose)
        return rot[0], trans[0]

    def fk_frames_batch(self, qs: np.ndarray, base_pose: RigidPose | None = None):
        """Forward kinematics for K configurations at once; returns
        rotations (K, L, 3, 3) and translations (K, L, 3)."""
        origin_r, origin_t, skews, outer = self._fk_constants()
        qs = np.asarray(qs, dtype=np.float64)
        k, n = qs.shape
        rot = np.empty((k, n + 1, 3, 3))
        trans = np.empty((k, n + 1, 3))
        if base_pose is None:
            rot[:, 0] = np.eye(3)
            trans[:, 0] = 0.0
        else:
            rot[:, 0] = base_pose.matrix3
            trans[:, 0] = base_pose.translation
        cos = np.cos(qs)
        sin = np.sin(qs)
        eye = np.eye(3)
        for i in range(n):
            r_axis = (
                cos[:, i, None, None] * eye
                + sin[:, i, None, None] * skews[i]
                + (1.0 - cos[:, i, None, None]) * outer[i]
            )
            rot[:, i + 1] = np.einsum("kij,kjl->kil", rot[:, i] @ origin_r[i], r_axis)
            trans[:, i + 1] = np.einsum("kij,j->ki", rot[:, i], origin_t[i]) + trans[:, i]
        return rot, trans

    def joint_levers(self) -> np.ndarray:
        """Upper bound on the workspace distance any collision-sphere
        surface point can sit from joint i's axis, for sweep estimates."""
        tail = np.zeros(self.dof + 1)
        acc = float(np.linalg.norm(self.ee_transform.translation))
        reach = acc
        for i in range(self.dof - 1, -1, -1):
            acc += float(np.linalg.norm(self.joints[i].origin.translation))
            reach = max(reach, acc)
            tail[i] = reach
        sphere_extent = 0.0
        for link in self.links:
            for center, radius in link.spheres:
                sphere_extent = max(sphere_extent, float(np.linalg.norm(center)) + radius)
        return tail[: self.dof] + sphere_extent


def _parse_origin(elem) -> RigidPose:
    if elem is None:
        return RigidPose.identity()
    xyz = [float(x) for x in elem.get("xyz", "0 0 0").split()]
    rpy = [float(x) for x in elem.get("rpy", "0 0 0").split()]
    return RigidPose(quat_from_rpy(*rpy), np.array(xyz))


def _parse_visual(elem) -> VisualSpec:
    origin = _parse_origin(elem.find("origin"))
    geom = elem.find("geometry")
    if geom is None:
        raise RobotModelError("visual element without geometry")
    color = (0.7, 0.7, 0.7)
    material = elem.find("material")
    if material is not None:
        c = material.find("color")
        if c is not None:
            rgba = [float(x) for x in c.get("rgba", "0.7 0.7 0.7 1").split()]
            color = tuple(rgba[:3])
    box = geom.find("box")
    if box is not None:
        return VisualSpec("box", tuple(float(x) for x in box.get("size").split()), origin, color)
    cyl = geom.find("cylinder")
    if cyl is not None:
        return VisualSpec(
            "cylinder", (float(cyl.get("radius")), float(cyl.get("length"))), origin, color
        )
    sph = geom.find("sphere")
    if sph is not None:
        return VisualSpec("sphere", (float(sph.get("radius")),), origin, color)
    mesh = geom.find("mesh")
    if mesh is not None:
        return VisualSpec("mesh", (mesh.get("filename"),), origin, color)
    raise RobotModelError("visual geometry must be box, cylinder, sphere, or mesh")


def parse_chain(
    urdf_text: str,
    collision_spheres: dict | None = None,
    base_dir: Path | None = None,
) -> KinematicChain:
    """Parse a URDF document restricted to a single serial chain of
    revolute joints (fixed joints are folded away).

    `collision_spheres` maps original link names to [{"center": [x, y, z],
    "radius": r}, ...].
    """
    try:
        root = ET.fromstring(urdf_text)
    except ET.ParseError as e:
        raise RobotModelError(f"malformed robot description: {e}") from None
    if root.tag != "robot":
        raise RobotModelError(f"expected <robot> document, got <{root.tag}>")

    link_visuals: dict[str, list] = {}
    for link in root.findall("link"):
        name = link.get("name")
        link_visuals[name] = [_parse_visual(v) for v in link.findall("visual")]

    joints_by_parent: dict[str, list] = {}
    child_links = set()
    raw_joints = []
    for j in root.findall("joint"):
        jtype = j.get("type")
        name = j.get("name")
        if jtype not in ("revolute", "fixed"):
            raise RobotModelError(f"unsupported joint type '{jtype}' in joint '{name}'")
        parent = j.find("parent").get("link")
        child = j.find("child").get("link")
        entry = (name, jtype, parent, child, j)
        joints_by_parent.setdefault(parent, []).append(entry)
        child_links.add(child)
        raw_joints.append(entry)

    roots = [n for n in link_visuals if n not in child_links]
    if len(roots) != 1:
        raise RobotModelError(f"expected exactly one root link, found {roots}")
    for parent, entries in joints_by_parent.items():
        if len(entries) > 1:
            raise RobotModelError(
                f"branching chain at link '{parent}' "
                f"(joints {[e[0] for e in entries]}); only serial chains are supported"
            )

    spheres_doc = collision_spheres or {}

    def link_payload(link_name: str, offset: RigidPose):
        visuals, spheres = [], []
        for spec in link_visuals.get(link_name, []):
            visuals.append(
                VisualSpec(spec.kind, spec.params, offset @ spec.origin, spec.color)
            )
        for s in spheres_doc.get(link_name, []):
            spheres.append((offset.apply(np.asarray(s["center"], dtype=np.float64)),
                            float(s["radius"])))
        return visuals, spheres

    base = LinkGeometry(roots[0])
    base.visuals, base.spheres = link_payload(roots[0], RigidPose.identity())
    joints: list[Joint] = []
    links: list[LinkGeometry] = [base]
    pending = RigidPose.identity()
    current = roots[0]
    visited = 1

    while current in joints_by_parent:
        name, jtype, _, child, elem = joints_by_parent[current][0]
        origin = _parse_origin(elem.find("origin"))
        if jtype == "fixed":
            pending = pending @ origin
            target = links[-1]
            v, s = link_payload(child, pending)
            target.visuals += v
            target.spheres += s
        else:
            axis_elem = elem.find("axis")
            axis = np.array(
                [float(x) for x in axis_elem.get("xyz").split()]
                if axis_elem is not None
                else [1.0, 0.0, 0.0]
            )
            limit = elem.find("limit")
            if limit is None or limit.get("lower") is None or limit.get("upper") is None:
                raise RobotModelError(f"revolute joint '{name}' is missing limits")
            joints.append(
                Joint(
                    name,
                    pending @ origin,
                    axis,
                    float(limit.get("lower")),
                    float(limit.get("upper")),
                    child,
                )
            )
            link = LinkGeometry(child)
            link.visuals, link.spheres = link_payload(child, RigidPose.identity())
            links.append(link)
            pending = RigidPose.identity()
        current = child
        visited += 1
        if visited > len(raw_joints) + 1:
            raise RobotModelError("robot description contains a joint cycle")

    for link in links:
        link.meshes = [spec.build_mesh(base_dir) for spec in link.visuals]

    return KinematicChain(root.get("name", "robot"), joints, links, pending)


def serialize_chain(chain: KinematicChain) -> tuple[str, dict]:
    """Emit (URDF document, collision-sphere sidecar) that parse back to
    an equal chain."""

    def origin_xml(pose: RigidPose, indent: str) -> str:
        t = pose.translation
        # recover fixed-axis rpy from the rotation matrix
        m = pose.matrix3
        pitch = np.arcsin(np.clip(-m[2, 0], -1.0, 1.0))
        if abs(m[2, 0]) < 1.0 - 1e-12:
            roll = np.arctan2(m[2, 1], m[2, 2])
            yaw = np.arctan2(m[1, 0], m[0, 0])
        else:
            roll = np.arctan2(-m[1, 2], m[1, 1])
            yaw = 0.0
        return (
            f'{indent}<origin xyz="{t[0]:.17g} {t[1]:.17g} {t[2]:.17g}" '
            f'rpy="{roll:.17g} {pitch:.17g} {yaw:.17g}"/>\n'
        )

    def visual_xml(spec: VisualSpec) -> str:
        if spec.kind == "box":
            geom = f'<box size="{spec.params[0]:.17g} {spec.params[1]:.17g} {spec.params[2]:.17g}"/>'
        elif spec.kind == "cylinder":
            geom = f'<cylinder radius="{spec.params[0]:.17g}" length="{spec.params[1]:.17g}"/>'
        elif spec.kind == "sphere":
            geom = f'<sphere radius="{spec.params[0]:.17g}"/>'
        else:
            geom = f'<mesh filename="{spec.params[0]}"/>'
        rgba = f'{spec.color[0]:.17g} {spec.color[1]:.17g} {spec.color[2]:.17g} 1'
        return (
            "    <visual>\n"
            + origin_xml(spec.origin, "      ")
            + f"      <geometry>{geom}</geometry>\n"
            + f'      <material name=""><color rgba="{rgba}"/></material>\n'
            + "    </visual>\n"
        )

    out = [f'<robot name="{chain.name}">\n']
    for link in chain.links:
        out.append(f'  <link name="{link.name}">\n')
        for spec in link.visuals:
            out.append(visual_xml(spec))
        out.append("  </link>\n")
    if not chain.ee_transform.allclose(RigidPose.identity(), atol=0.0):
        out.append('  <link name="__ee__"/>\n')

    parent = chain.links[0].name
    for i, joint in enumerate(chain.joints):
        out.append(f'  <joint name="{joint.name}" type="revolute">\n')
        out.append(origin_xml(joint.origin, "    "))
        out.append(f'    <parent link="{parent}"/>\n')
        out.append(f'    <child link="{joint.child_link}"/>\n')
        out.append(
            f'    <axis xyz="{joint.axis[0]:.17g} {joint.axis[1]:.17g} {joint.axis[2]:.17g}"/>\n'
        )
        out.append(f'    <limit lower="{joint.lower:.17g}" upper="{joint.upper:.17g}"/>\n')
        out.append("  </joint>\n")
        parent = joint.child_link
    if not chain.ee_transform.allclose(RigidPose.identity(), atol=0.0):
        out.append('  <joint name="__ee_fixed__" type="fixed">\n')
        out.append(origin_xml(chain.ee_transform, "    "))
        out.append(f'    <parent link="{parent}"/>\n')
        out.append('    <child link="__ee__"/>\n')
        out.append("  </joint>\n")
    out.append("</robot>\n")

    sidecar = {
        link.name: [
            {"center": list(map(float, c)), "radius": float(r)} for c, r in link.spheres
        ]
        for link in chain.links
        if link.spheres
    }
    return "".join(out), sidecar


def load_chain(urdf_path, spheres_path=None) -> KinematicChain:
    import json

    urdf_path = Path(urdf_path)
    spheres = None
    if spheres_path is not None:
        with open(spheres_path) as f:
            spheres = json.load(f)
    return parse_chain(urdf_path.read_text(), spheres, urdf_path.parent)


def forward_kinematics(chain: KinematicChain, q: np.ndarray, base_pose: RigidPose | None = None):
    """Compose fixed transforms and axis rotations base to tip.

    Returns (link poses, end-effector pose); link poses has length
    dof + 1 with the base link first (identity unless base_pose given).
    """
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if len(q) != chain.dof:
        raise ValueError(f"joint vector has {len(q)} entries, chain has {chain.dof} joints")
    pose = base_pose if base_pose is not None else RigidPose.identity()
    poses = [pose]
    for joint, qi in zip(chain.joints, q):
        pose = pose @ joint.origin @ RigidPose(quat_from_axis_angle(joint.axis, qi))
        poses.append(pose)
    return poses, pose @ chain.ee_transform


def _jacobian(chain: KinematicChain, poses, ee: RigidPose) -> np.ndarray:
    """Geometric Jacobian (world frame): rows [v; omega], columns per joint."""
    j = np.zeros((6, chain.dof))
    p_ee = ee.translation
    for i, joint in enumerate(chain.joints):
        link_pose = poses[i + 1]
        axis_w = link_pose.matrix3 @ joint.axis
        p_i = link_pose.translation
        j[:3, i] = np.cross(axis_w, p_ee - p_i)
        j[3:, i] = axis_w
    return j


@dataclass(frozen=True)
class IkResult:
    q: np.ndarray
    pos_error: float
    rot_error: float
    converged: bool
    iterations: int


def ik_solve(
    chain: KinematicChain,
    target: RigidPose,
    init: np.ndarray,
    weights: tuple = (1.0, 1.0),
    pos_tol: float = 1e-4,
    rot_tol: float = 1e-3,
    max_iterations: int = 200,
    base_pose: RigidPose | None = None,
    restarts: int = 0,
    restart_seed: int = 0,
) -> IkResult:
    """Damped-least-squares IK minimizing w_pos*|dp|^2 + w_rot*|dtheta|^2,
    with dtheta the rotation-vector error. Joint limits are enforced by
    clamping each step; the weighted error is non-increasing across
    accepted iterations (damping is raised on increase, lowered on
    decrease). Non-convergence returns the best-effort q with its final
    errors rather than raising.

    restarts > 0 retries from seeded uniform in-limit initializations
    when the given init's basin does not converge (deterministic)."""
    result = _dls_solve(
        chain, target, init, weights, pos_tol, rot_tol, max_iterations, base_pose
    )
    if result.converged or restarts <= 0:
        return result
    best = result
    rng = np.random.default_rng(restart_seed)
    lim = chain.limits
    for _ in range(restarts):
        q0 = rng.uniform(lim[:, 0], lim[:, 1])
        attempt = _dls_solve(
            chain, target, q0, weights, pos_tol, rot_tol, max_iterations, base_pose
        )
        if attempt.converged:
            return attempt
        if attempt.pos_error + attempt.rot_error < best.pos_error + best.rot_error:
            best = attempt
    return best


def _dls_solve(
    chain: KinematicChain,
    target: RigidPose,
    init: np.ndarray,
    weights: tuple,
    pos_tol: float,
    rot_tol: float,
    max_iterations: int,
    base_pose: RigidPose | None,
) -> IkResult:
    w_pos, w_rot = float(weights[0]), float(weights[1])
    if w_pos < 0 or w_rot < 0 or (w_pos == 0 and w_rot == 0):
        raise ValueError("weights must be non-negative and not both zero")
    q = chain.clamp(np.asarray(init, dtype=np.float64).reshape(-1).copy())
    if len(q) != chain.dof:
        raise ValueError(f"init has {len(q)} entries, chain has {chain.dof} joints")

    w_diag = np.concatenate([np.full(3, w_pos), np.full(3, w_rot)])

    def errors(qv):
        poses, ee = forward_kinematics(chain, qv, base_pose)
        dp = target.translation - ee.translation
        dr = quat_to_rotvec((target @ ee.inverse()).rotation)
        return poses, ee, dp, dr

    def scalar(dp, dr):
        return w_pos * float(dp @ dp) + w_rot * float(dr @ dr)

    poses, ee, dp, dr = errors(q)
    err = scalar(dp, dr)
    lam = 1e-3
    iterations = 0

    def done(dp, dr):
        ok_pos = w_pos == 0 or np.linalg.norm(dp) < pos_tol
        ok_rot = w_rot == 0 or np.linalg.norm(dr) < rot_tol
        return ok_pos and ok_rot

    while iterations < max_iterations and not done(dp, dr):
        iterations += 1
        jac = _jacobian(chain, poses, ee)
        e = np.concatenate([dp, dr])
        jtw = jac.T * w_diag
        lhs = jtw @ jac + lam * np.eye(chain.dof)
        step = np.linalg.solve(lhs, jtw @ e)
        q_new = chain.clamp(q + step)
        poses_new, ee_new, dp_new, dr_new = errors(q_new)
        err_new = scalar(dp_new, dr_new)
        if err_new > err:
            lam = min(lam * 10.0, 1e8)
            continue
        lam = max(lam / 3.0, 1e-12)
        q, poses, ee, dp, dr, err = q_new, poses_new, ee_new, dp_new, dr_new, err_new

    return IkResult(q, float(np.linalg.norm(dp)), float(np.linalg.norm(dr)),
                    done(dp, dr), iterations)
