"""Triangle meshes: STL/OBJ loading, primitive generators, area-weighted
surface sampling, and Sim(3) placement."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .pointcloud import PointCloud
from .transforms import Sim3

__all__ = [
    "TriMesh",
    "load_mesh",
    "save_obj",
    "sample_mesh_points",
    "apply_placement_to_mesh",
    "box_mesh",
    "cylinder_mesh",
    "icosphere_mesh",
]


@dataclass(frozen=True)
class TriMesh:
    vertices: np.ndarray   # (V, 3) meters
    triangles: np.ndarray  # (T, 3) vertex indices
    label: str = ""

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(v)):
            raise ValueError("mesh vertices must be finite")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle index out of range")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    def triangle_areas(self) -> np.ndarray:
        a = self.vertices[self.triangles[:, 0]]
        b = self.vertices[self.triangles[:, 1]]
        c = self.vertices[self.triangles[:, 2]]
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def drop_degenerate(self, eps: float = 1e-14) -> "TriMesh":
        if not len(self.triangles):
            return self
        keep = self.triangle_areas() > eps
        return TriMesh(self.vertices, self.triangles[keep], self.label)


def load_mesh(path, label: str = "") -> TriMesh:
    """Load an STL (ascii or binary) or OBJ file; faces are triangulated
    and zero-area triangles dropped."""
    path = str(path)
    lower = path.lower()
    if lower.endswith(".obj"):
        mesh = _load_obj(path, label)
    elif lower.endswith(".stl"):
        mesh = _load_stl(path, label)
    else:
        raise ValueError(f"unsupported mesh format: {path}")
    mesh = mesh.drop_degenerate()
    if not len(mesh.triangles):
        raise ValueError(f"mesh has no non-degenerate triangles: {path}")
    return mesh


def _load_obj(path: str, label: str) -> TriMesh:
    vertices = []
    faces = []
    with open(path, "r") as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                vertices.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) for p in parts[1:]]
                idx = [i - 1 if i > 0 else len(vertices) + i for i in idx]
                for k in range(1, len(idx) - 1):  # fan triangulation
                    faces.append([idx[0], idx[k], idx[k + 1]])
    return TriMesh(np.array(vertices, dtype=np.float64).reshape(-1, 3),
                   np.array(faces, dtype=np.int64).reshape(-1, 3), label)


def _load_stl(path: str, label: str) -> TriMesh:
    with open(path, "rb") as f:
        data = f.read()
    if data[:5] == b"solid" and b"facet" in data[:500]:
        return _load_stl_ascii(data.decode("ascii", errors="replace"), label)
    n_tri = struct.unpack("<I", data[80:84])[0]
    if len(data) < 84 + 50 * n_tri:
        raise ValueError(f"binary STL truncated: {len(data)} bytes for {n_tri} triangles")
    rec = np.frombuffer(data[84:84 + 50 * n_tri], dtype=np.uint8).reshape(n_tri, 50)
    floats = rec[:, :48].copy().view("<f4").reshape(n_tri, 12)
    verts = floats[:, 3:12].reshape(n_tri * 3, 3).astype(np.float64)
    tris = np.arange(n_tri * 3, dtype=np.int64).reshape(n_tri, 3)
    return _dedupe(verts, tris, label)


def _load_stl_ascii(text: str, label: str) -> TriMesh:
    verts = []
    for line in text.splitlines():
        parts = line.split()
        if parts[:1] == ["vertex"]:
            verts.append([float(x) for x in parts[1:4]])
    verts = np.array(verts, dtype=np.float64).reshape(-1, 3)
    if len(verts) % 3:
        raise ValueError("ascii STL vertex count is not a multiple of 3")
    tris = np.arange(len(verts), dtype=np.int64).reshape(-1, 3)
    return _dedupe(verts, tris, label)


def _dedupe(verts: np.ndarray, tris: np.ndarray, label: str) -> TriMesh:
    uniq, inverse = np.unique(verts.round(decimals=12), axis=0, return_inverse=True)
    return TriMesh(uniq, inverse[tris.reshape(-1)].reshape(-1, 3), label)


def save_obj(path, mesh: TriMesh) -> None:
    with open(path, "w") as f:
        for v in mesh.vertices:
            f.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for t in mesh.triangles:
            f.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def sample_mesh_points(mesh: TriMesh, n: int, seed: int) -> PointCloud:
    """Area-weighted uniform surface sampling; deterministic per seed."""
    if n < 1:
        raise ValueError("sample count must be >= 1")
    if not len(mesh.triangles):
        raise ValueError("cannot sample an empty mesh")
    areas = mesh.triangle_areas()
    total = areas.sum()
    if total <= 0:
        raise ValueError("degenerate mesh: zero total surface area")
    rng = np.random.default_rng(seed)
    tri_idx = rng.choice(len(areas), size=n, p=areas / total)
    r1 = rng.random(n)
    r2 = rng.random(n)
    sqrt_r1 = np.sqrt(r1)
    u = 1.0 - sqrt_r1
    v = sqrt_r1 * (1.0 - r2)
    w = sqrt_r1 * r2
    a = mesh.vertices[mesh.triangles[tri_idx, 0]]
    b = mesh.vertices[mesh.triangles[tri_idx, 1]]
    c = mesh.vertices[mesh.triangles[tri_idx, 2]]
    return PointCloud(u[:, None] * a + v[:, None] * b + w[:, None] * c, mesh.label)


def apply_placement_to_mesh(mesh: TriMesh, place: Sim3) -> TriMesh:
    """Map every vertex x -> s*R*x + t; topology unchanged."""
    return TriMesh(place.apply(mesh.vertices), mesh.triangles, mesh.label)


def box_mesh(size, center=(0.0, 0.0, 0.0), label: str = "") -> TriMesh:
    sx, sy, sz = (np.asarray(size, dtype=np.float64) / 2.0).tolist()
    cx, cy, cz = center
    v = np.array(
        [
            [-sx, -sy, -sz], [sx, -sy, -sz], [sx, sy, -sz], [-sx, sy, -sz],
            [-sx, -sy, sz], [sx, -sy, sz], [sx, sy, sz], [-sx, sy, sz],
        ]
    ) + np.array([cx, cy, cz])
    quads = [
        (0, 3, 2, 1), (4, 5, 6, 7), (0, 1, 5, 4),
        (2, 3, 7, 6), (1, 2, 6, 5), (3, 0, 4, 7),
    ]
    tris = []
    for a, b, c, d in quads:
        tris += [[a, b, c], [a, c, d]]
    return TriMesh(v, np.array(tris, dtype=np.int64), label)


def cylinder_mesh(radius: float, length: float, segments: int = 16, label: str = "") -> TriMesh:
    """Cylinder along +z from z=0 to z=length."""
    ang = np.linspace(0.0, 2.0 * np.pi, segments, endpoint=False)
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    bottom = np.concatenate([ring, np.zeros((segments, 1))], axis=1)
    top = np.concatenate([ring, np.full((segments, 1), length)], axis=1)
    verts = np.concatenate([bottom, top, [[0, 0, 0]], [[0, 0, length]]])
    cb, ct = 2 * segments, 2 * segments + 1
    tris = []
    for i in range(segments):
        j = (i + 1) % segments
        tris += [[i, j, segments + i], [j, segments + j, segments + i]]
        tris += [[cb, j, i], [ct, segments + i, segments + j]]
    return TriMesh(verts, np.array(tris, dtype=np.int64), label)


def icosphere_mesh(radius: float, subdivisions: int = 1, label: str = "") -> TriMesh:
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    for _ in range(subdivisions):
        verts = list(map(tuple, v))
        index = {t: i for i, t in enumerate(verts)}

        def midpoint(i, j):
            m = v[i] + v[j]
            m = tuple(m / np.linalg.norm(m))
            if m not in index:
                index[m] = len(verts)
                verts.append(m)
            return index[m]

        new_f = []
        for a, b, c in f:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_f += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        v = np.array(verts, dtype=np.float64)
        f = np.array(new_f, dtype=np.int64)
    return TriMesh(radius * v, f, label)
