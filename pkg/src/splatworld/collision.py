"""Collision queries: link collision spheres against triangle meshes
(exact point-triangle distance, BVH-accelerated) plus sphere-sphere
self-collision between non-adjacent links."""

from __future__ import annotations

import numpy as np

from .kinematics import KinematicChain
from .transforms import RigidPose

__all__ = ["ObstacleSet", "check_collision", "point_triangle_distances"]

_LEAF_SIZE = 16
_BRUTE_FORCE_LIMIT = 1024


def _paired_point_triangle_distances(p, a, b, c) -> np.ndarray:
    """Exact distance for N (point, triangle) pairs, all inputs (N, 3)
    (vectorized closest-point-on-triangle, Ericson's region tests)."""
    ab = b - a
    ac = c - a
    ap = p - a

    d1 = (ab * ap).sum(-1)
    d2 = (ac * ap).sum(-1)
    bp = ap - ab
    d3 = (ab * bp).sum(-1)
    d4 = (ac * bp).sum(-1)
    cp = ap - ac
    d5 = (ab * cp).sum(-1)
    d6 = (ac * cp).sum(-1)

    closest = np.empty_like(p)
    done = np.zeros(len(p), dtype=bool)

    region = (d1 <= 0) & (d2 <= 0)  # vertex a
    closest[region] = a[region]
    done |= region

    region = ~done & (d3 >= 0) & (d4 <= d3)  # vertex b
    closest[region] = b[region]
    done |= region

    region = ~done & (d6 >= 0) & (d5 <= d6)  # vertex c
    closest[region] = c[region]
    done |= region

    vc = d1 * d4 - d3 * d2
    region = ~done & (vc <= 0) & (d1 >= 0) & (d3 <= 0)  # edge ab
    if region.any():
        denom = np.where(d1[region] - d3[region] == 0, 1.0, d1[region] - d3[region])
        closest[region] = a[region] + (d1[region] / denom)[:, None] * ab[region]
    done |= region

    vb = d5 * d2 - d1 * d6
    region = ~done & (vb <= 0) & (d2 >= 0) & (d6 <= 0)  # edge ac
    if region.any():
        denom = np.where(d2[region] - d6[region] == 0, 1.0, d2[region] - d6[region])
        closest[region] = a[region] + (d2[region] / denom)[:, None] * ac[region]
    done |= region

    va = d3 * d6 - d5 * d4
    region = ~done & (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)  # edge bc
    if region.any():
        denom = (d4[region] - d3[region]) + (d5[region] - d6[region])
        denom = np.where(denom == 0, 1.0, denom)
        t = ((d4[region] - d3[region]) / denom)[:, None]
        closest[region] = b[region] + t * (c[region] - b[region])
    done |= region

    if (~done).any():  # interior
        idx = ~done
        denom = va[idx] + vb[idx] + vc[idx]
        denom = np.where(denom == 0, 1.0, denom)
        v = (vb[idx] / denom)[:, None]
        w = (vc[idx] / denom)[:, None]
        closest[idx] = a[idx] + v * ab[idx] + w * ac[idx]

    return np.linalg.norm(closest - p, axis=1)


def point_triangle_distances(points: np.ndarray, a, b, c) -> np.ndarray:
    """Exact distances from P points to T triangles, shape (P, T)."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    n_p, n_t = len(p), len(a)
    pi, ti = np.repeat(np.arange(n_p), n_t), np.tile(np.arange(n_t), n_p)
    d = _paired_point_triangle_distances(p[pi], a[ti], b[ti], c[ti])
    return d.reshape(n_p, n_t)


class _AabbTree:
    """Median-split AABB tree over triangles with vectorized leaf tests."""

    def __init__(self, a: np.ndarray, b: np.ndarray, c: np.ndarray):
        self.a, self.b, self.c = a, b, c
        lo = np.minimum(np.minimum(a, b), c)
        hi = np.maximum(np.maximum(a, b), c)
        self.centers = (lo + hi) / 2.0
        self.nodes = []  # (lo, hi, left, right, leaf_indices)
        self.root = self._build(np.arange(len(a)), lo, hi)

    def _build(self, idx: np.ndarray, lo_all, hi_all) -> int:
        lo = lo_all[idx].min(axis=0)
        hi = hi_all[idx].max(axis=0)
        node_id = len(self.nodes)
        if len(idx) <= _LEAF_SIZE:
            self.nodes.append((lo, hi, -1, -1, idx))
            return node_id
        self.nodes.append(None)
        axis = int(np.argmax(hi - lo))
        order = np.argsort(self.centers[idx, axis], kind="stable")
        half = len(idx) // 2
        left = self._build(idx[order[:half]], lo_all, hi_all)
        right = self._build(idx[order[half:]], lo_all, hi_all)
        self.nodes[node_id] = (lo, hi, left, right, None)
        return node_id

    def sphere_hits(self, center: np.ndarray, radius: float) -> bool:
        stack = [self.root]
        while stack:
            lo, hi, left, right, leaf = self.nodes[stack.pop()]
            gap = np.maximum(np.maximum(lo - center, center - hi), 0.0)
            if float(gap @ gap) > radius * radius:
                continue
            if leaf is not None:
                d = point_triangle_distances(center, self.a[leaf], self.b[leaf], self.c[leaf])
                if np.any(d <= radius):
                    return True
            else:
                stack.append(left)
                stack.append(right)
        return False


class ObstacleSet:
    """World-frame obstacle meshes with a precomputed BVH per mesh.

    Small scenes additionally keep a flattened triangle soup for
    single-shot vectorized queries.
    """

    def __init__(self, placed_meshes):
        self.instances = []
        tri_a, tri_b, tri_c = [], [], []
        self.trees = []
        for mesh, pose in placed_meshes:
            if not isinstance(pose, RigidPose):
                raise TypeError("obstacle poses must be RigidPose")
            world_v = pose.apply(mesh.vertices)
            self.instances.append((mesh, pose))
            a = world_v[mesh.triangles[:, 0]]
            b = world_v[mesh.triangles[:, 1]]
            c = world_v[mesh.triangles[:, 2]]
            tri_a.append(a)
            tri_b.append(b)
            tri_c.append(c)
            self.trees.append(_AabbTree(a, b, c))
        if tri_a:
            self._a = np.concatenate(tri_a)
            self._b = np.concatenate(tri_b)
            self._c = np.concatenate(tri_c)
        else:
            self._a = np.zeros((0, 3))
            self._b = np.zeros((0, 3))
            self._c = np.zeros((0, 3))
        self._small = len(self._a) <= _BRUTE_FORCE_LIMIT
        # per-triangle bounding spheres for the cheap prefilter
        self._centroid = (self._a + self._b + self._c) / 3.0
        self._bound_r = np.sqrt(
            np.maximum(
                ((self._a - self._centroid) ** 2).sum(-1),
                np.maximum(
                    ((self._b - self._centroid) ** 2).sum(-1),
                    ((self._c - self._centroid) ** 2).sum(-1),
                ),
            )
        ) if len(self._a) else np.zeros(0)

    def candidate_pairs(self, points: np.ndarray, radii: np.ndarray):
        """Bounding-sphere prefilter: indices of (point, triangle) pairs
        that could be within the per-point radius."""
        diff = points[:, None, :] - self._centroid[None, :, :]
        d2 = np.einsum("ptk,ptk->pt", diff, diff)
        reach = self._bound_r[None, :] + radii[:, None]
        return np.nonzero(d2 <= reach * reach)

    def __len__(self) -> int:
        return len(self.instances)

    @property
    def triangle_count(self) -> int:
        return len(self._a)

    def any_sphere_collides(self, centers: np.ndarray, radii: np.ndarray) -> bool:
        """Batched query: True if any of the spheres touches any triangle."""
        if not len(self._a) or not len(centers):
            return False
        if self._small:
            d = point_triangle_distances(centers, self._a, self._b, self._c)
            return bool(np.any(d.min(axis=1) <= radii))
        return any(
            tree.sphere_hits(center, r)
            for center, r in zip(centers, radii)
            for tree in self.trees
        )

    def sphere_collides(self, center: np.ndarray, radius: float) -> bool:
        return self.any_sphere_collides(
            np.asarray(center, dtype=np.float64).reshape(1, 3), np.array([radius])
        )

    def min_distance(self, center: np.ndarray) -> float:
        if not len(self._a):
            return np.inf
        return float(point_triangle_distances(center, self._a, self._b, self._c).min())


def check_collision(
    chain: KinematicChain,
    q: np.ndarray,
    obstacles: ObstacleSet,
    base_pose: RigidPose | None = None,
    inflate: float = 0.0,
) -> bool:
    """True iff any link sphere is within its (inflated) radius of any
    obstacle triangle, or any two non-adjacent link spheres overlap."""
    return check_collision_batch(
        chain, np.asarray(q, dtype=np.float64)[None, :], obstacles, base_pose, inflate
    )


def check_collision_batch(
    chain: KinematicChain,
    qs: np.ndarray,
    obstacles: ObstacleSet,
    base_pose: RigidPose | None = None,
    inflate: float = 0.0,
) -> bool:
    """True iff any of the K configurations collides (one vectorized
    sweep over all configurations and spheres)."""
    link_ids, locals_, radii = chain.collision_arrays()
    if not len(link_ids):
        return False
    qs = np.asarray(qs, dtype=np.float64)
    rot, trans = chain.fk_frames_batch(qs, base_pose)
    centers = (
        np.einsum("ksij,sj->ksi", rot[:, link_ids], locals_) + trans[:, link_ids]
    )  # (K, S, 3)
    k, s, _ = centers.shape

    flat = centers.reshape(k * s, 3)
    flat_r = np.tile(radii, k) + inflate
    if obstacles._small:
        if obstacles.triangle_count:
            pi, ti = obstacles.candidate_pairs(flat, flat_r)
            if len(pi):
                d = _paired_point_triangle_distances(
                    flat[pi], obstacles._a[ti], obstacles._b[ti], obstacles._c[ti]
                )
                if bool(np.any(d <= flat_r[pi])):
                    return True
    else:
        for center, r in zip(flat, flat_r):
            if any(tree.sphere_hits(center, r) for tree in obstacles.trees):
                return True

    # self-collision between links at least two joints apart
    if s > 1:
        diff = centers[:, :, None, :] - centers[:, None, :, :]
        dist2 = np.einsum("kijc,kijc->kij", diff, diff)
        rsum = radii[:, None] + radii[None, :]
        apart = np.abs(link_ids[:, None] - link_ids[None, :]) >= 2
        pair = np.triu(apart, k=1)
        if bool(np.any(dist2[:, pair] <= (rsum[pair] ** 2))):
            return True
    return False
