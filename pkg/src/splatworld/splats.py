"""Gaussian-splat data model and exact math on splat sets.

A SplatSet stores all primitives as contiguous float64 arrays (means,
log-scales, wxyz quaternions, opacity logits, SH coefficients) so that
transforms and rendering stay vectorized; GaussianSplat is the
single-primitive view used by the per-splat operations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .transforms import Sim3, quat_multiply, quat_normalize, quat_to_matrix

__all__ = [
    "SHCoefficients",
    "GaussianSplat",
    "SplatSet",
    "SymMat3",
    "covariance_of",
    "density_at",
    "apply_sim3",
    "merge",
    "sample_points",
    "sigmoid",
]


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def sh_coeff_count(degree: int) -> int:
    """Number of RGB triples for a given SH degree."""
    return (degree + 1) ** 2


def degree_from_rest_count(n_rest_scalars: int) -> int:
    """Infer SH degree from the number of non-DC scalar coefficients."""
    for degree in range(4):
        if 3 * (sh_coeff_count(degree) - 1) == n_rest_scalars:
            return degree
    raise ValueError(
        f"{n_rest_scalars} rest coefficients do not match any SH degree in [0, 3]"
    )


@dataclass(frozen=True)
class SHCoefficients:
    """View-dependent color as real spherical harmonics, (degree+1)^2 RGB triples.

    Row 0 is the DC term.
    """

    degree: int
    coefficients: np.ndarray  # ((degree+1)^2, 3)

    def __post_init__(self):
        if not 0 <= self.degree <= 3:
            raise ValueError(f"SH degree must be in [0, 3], got {self.degree}")
        c = np.asarray(self.coefficients, dtype=np.float64)
        want = (sh_coeff_count(self.degree), 3)
        if c.shape != want:
            raise ValueError(f"SH coefficient shape {c.shape} != {want}")
        if not np.all(np.isfinite(c)):
            raise ValueError("SH coefficients must be finite")
        object.__setattr__(self, "coefficients", c)

    @property
    def dc(self) -> np.ndarray:
        return self.coefficients[0]


@dataclass(frozen=True)
class GaussianSplat:
    """One anisotropic 3D Gaussian primitive.

    mean in meters, scales stored as logs, rotation as a unit wxyz
    quaternion, opacity as a logit (activated opacity = sigmoid(logit)).
    """

    mean: np.ndarray
    log_scales: np.ndarray
    rotation: np.ndarray
    opacity_logit: float
    sh: SHCoefficients

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(3)
        ls = np.asarray(self.log_scales, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(mean)):
            raise ValueError("splat mean must be finite")
        if not np.all(np.isfinite(ls)):
            raise ValueError("log_scales must be finite")
        if not np.isfinite(self.opacity_logit):
            raise ValueError("opacity logit must be finite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "log_scales", ls)
        object.__setattr__(self, "rotation", quat_normalize(self.rotation))
        object.__setattr__(self, "opacity_logit", float(self.opacity_logit))

    @property
    def opacity(self) -> float:
        return float(sigmoid(self.opacity_logit))


@dataclass(frozen=True)
class SymMat3:
    """Symmetric 3x3 matrix stored by its six unique entries."""

    xx: float
    xy: float
    xz: float
    yy: float
    yz: float
    zz: float

    @staticmethod
    def from_matrix(m: np.ndarray) -> "SymMat3":
        m = np.asarray(m, dtype=np.float64)
        if np.abs(m - m.T).max() > 1e-9:
            raise ValueError("matrix is not symmetric")
        return SymMat3(m[0, 0], m[0, 1], m[0, 2], m[1, 1], m[1, 2], m[2, 2])

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [
                [self.xx, self.xy, self.xz],
                [self.xy, self.yy, self.yz],
                [self.xz, self.yz, self.zz],
            ]
        )

    def is_positive_definite(self) -> bool:
        return bool(np.all(np.linalg.eigvalsh(self.matrix) > 0))


class SplatSet:
    """Ordered collection of GaussianSplat in one coordinate frame.

    Internally array-backed; iteration and indexing materialize
    GaussianSplat views. Instances are treated as immutable values.
    """

    def __init__(
        self,
        means: np.ndarray,
        log_scales: np.ndarray,
        rotations: np.ndarray,
        opacity_logits: np.ndarray,
        sh: np.ndarray,
        sh_degree: int,
        frame_label: str = "",
    ):
        n = len(means)
        self.means = np.asarray(means, dtype=np.float64).reshape(n, 3)
        self.log_scales = np.asarray(log_scales, dtype=np.float64).reshape(n, 3)
        rotations = np.asarray(rotations, dtype=np.float64).reshape(n, 4)
        self.opacity_logits = np.asarray(opacity_logits, dtype=np.float64).reshape(n)
        if not 0 <= sh_degree <= 3:
            raise ValueError(f"SH degree must be in [0, 3], got {sh_degree}")
        self.sh = np.asarray(sh, dtype=np.float64).reshape(n, sh_coeff_count(sh_degree), 3)
        self.sh_degree = int(sh_degree)
        self.frame_label = str(frame_label)

        for name, arr in (
            ("means", self.means),
            ("log_scales", self.log_scales),
            ("rotations", rotations),
            ("opacity_logits", self.opacity_logits),
            ("sh", self.sh),
        ):
            if not np.all(np.isfinite(arr)):
                bad = int(np.argwhere(~np.isfinite(arr).reshape(n, -1).all(axis=1))[0][0])
                raise ValueError(f"non-finite value in {name} at splat {bad}")
        if n:
            norms = np.linalg.norm(rotations, axis=1)
            if np.any(norms < 1e-12):
                bad = int(np.argmin(norms))
                raise ValueError(f"zero-norm quaternion at splat {bad}")
            rotations = rotations / norms[:, None]
        self.rotations = rotations

        for a in (self.means, self.log_scales, self.rotations, self.opacity_logits, self.sh):
            a.setflags(write=False)

    @staticmethod
    def empty(sh_degree: int = 0, frame_label: str = "") -> "SplatSet":
        k = sh_coeff_count(sh_degree)
        return SplatSet(
            np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 4)),
            np.zeros(0), np.zeros((0, k, 3)), sh_degree, frame_label,
        )

    @staticmethod
    def from_splats(splats, frame_label: str = "") -> "SplatSet":
        splats = list(splats)
        if not splats:
            return SplatSet.empty(0, frame_label)
        degree = max(s.sh.degree for s in splats)
        k = sh_coeff_count(degree)
        sh = np.zeros((len(splats), k, 3))
        for i, s in enumerate(splats):
            sh[i, : sh_coeff_count(s.sh.degree)] = s.sh.coefficients
        return SplatSet(
            np.stack([s.mean for s in splats]),
            np.stack([s.log_scales for s in splats]),
            np.stack([s.rotation for s in splats]),
            np.array([s.opacity_logit for s in splats]),
            sh,
            degree,
            frame_label,
        )

    def __len__(self) -> int:
        return len(self.means)

    def splat(self, i: int) -> GaussianSplat:
        return GaussianSplat(
            self.means[i],
            self.log_scales[i],
            self.rotations[i],
            float(self.opacity_logits[i]),
            SHCoefficients(self.sh_degree, self.sh[i]),
        )

    def __iter__(self):
        return (self.splat(i) for i in range(len(self)))

    @property
    def opacities(self) -> np.ndarray:
        return sigmoid(self.opacity_logits)

    def relabel(self, frame_label: str) -> "SplatSet":
        return SplatSet(
            self.means, self.log_scales, self.rotations,
            self.opacity_logits, self.sh, self.sh_degree, frame_label,
        )

    def pad_to_degree(self, degree: int) -> "SplatSet":
        """Zero-pad SH coefficients up to `degree` (exact for rendering)."""
        if degree < self.sh_degree:
            raise ValueError("cannot reduce SH degree")
        if degree == self.sh_degree:
            return self
        k = sh_coeff_count(degree)
        sh = np.zeros((len(self), k, 3))
        sh[:, : self.sh.shape[1]] = self.sh
        return SplatSet(
            self.means, self.log_scales, self.rotations,
            self.opacity_logits, sh, degree, self.frame_label,
        )

    def equals(self, other: "SplatSet", atol: float = 0.0) -> bool:
        if len(self) != len(other) or self.sh_degree != other.sh_degree:
            return False
        if self.frame_label != other.frame_label:
            return False
        for a, b in (
            (self.means, other.means),
            (self.log_scales, other.log_scales),
            (self.rotations, other.rotations),
            (self.opacity_logits, other.opacity_logits),
            (self.sh, other.sh),
        ):
            if a.size and np.abs(a - b).max() > atol:
                return False
        return True


def covariance_of(g: GaussianSplat) -> SymMat3:
    """World-space covariance R @ diag(exp(l)^2) @ R^T."""
    r = quat_to_matrix(g.rotation)
    s2 = np.exp(g.log_scales) ** 2
    return SymMat3.from_matrix((r * s2) @ r.T)


def density_at(g: GaussianSplat, x: np.ndarray) -> float:
    """Unnormalized Gaussian density exp(-0.5 * mahalanobis^2) in (0, 1]."""
    x = np.asarray(x, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(x)):
        raise ValueError("query point must be finite")
    r = quat_to_matrix(g.rotation)
    # Sigma^-1 = R diag(exp(-l))^2 R^T, so the Mahalanobis norm is the
    # scale-whitened body-frame offset.
    d = np.exp(-g.log_scales) * (r.T @ (x - g.mean))
    return float(np.exp(-0.5 * float(d @ d)))


def apply_sim3(splat_set: SplatSet, transform: Sim3) -> SplatSet:
    """Transform every primitive: means by s*R*mu + t, rotations left-composed,
    log-scales shifted by ln(s). Opacity and SH are copied verbatim."""
    r = transform.matrix3
    means = transform.scale * (splat_set.means @ r.T) + transform.translation
    log_scales = splat_set.log_scales + np.log(transform.scale)
    rotations = _quat_multiply_many(transform.rotation, splat_set.rotations)
    return SplatSet(
        means,
        log_scales,
        rotations,
        splat_set.opacity_logits,
        splat_set.sh,
        splat_set.sh_degree,
        splat_set.frame_label,
    )


def _quat_multiply_many(q: np.ndarray, quats: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    qw, qx, qy, qz = quats[:, 0], quats[:, 1], quats[:, 2], quats[:, 3]
    return np.stack(
        [
            w * qw - x * qx - y * qy - z * qz,
            w * qx + x * qw + y * qz - z * qy,
            w * qy - x * qz + y * qw + z * qx,
            w * qz + x * qy - y * qx + z * qw,
        ],
        axis=1,
    )


def merge(sets) -> SplatSet:
    """Concatenate splat sets in order (scene first, then objects).

    All non-empty inputs must carry the same frame label; a mismatch
    means an alignment step was skipped.
    """
    sets = list(sets)
    labeled = [s for s in sets if len(s)]
    labels = {s.frame_label for s in labeled}
    if len(labels) > 1:
        raise ValueError(f"cannot merge splat sets from different frames: {sorted(labels)}")
    if not sets:
        return SplatSet.empty(0, "")
    label = labeled[0].frame_label if labeled else sets[0].frame_label
    degree = max(s.sh_degree for s in sets)
    padded = [s.pad_to_degree(degree) for s in sets]
    return SplatSet(
        np.concatenate([s.means for s in padded]),
        np.concatenate([s.log_scales for s in padded]),
        np.concatenate([s.rotations for s in padded]),
        np.concatenate([s.opacity_logits for s in padded]),
        np.concatenate([s.sh for s in padded]),
        degree,
        label,
    )


def sample_points(splat_set: SplatSet, n: int, seed: int):
    """Draw n splat means with probability proportional to activated opacity.

    No per-splat Gaussian jitter is applied; deterministic per seed.
    Returns a PointCloud labeled with the set's frame label.
    """
    from .pointcloud import PointCloud

    if len(splat_set) == 0:
        raise ValueError("cannot sample points from an empty splat set")
    if n < 1:
        raise ValueError("sample count must be >= 1")
    rng = np.random.default_rng(seed)
    w = splat_set.opacities
    idx = rng.choice(len(splat_set), size=n, replace=True, p=w / w.sum())
    return PointCloud(splat_set.means[idx], label=splat_set.frame_label)
