"""Real spherical-harmonics color evaluation for splat assets.

color = 0.5 + sum_c c * Y(dir), with the band conventions of the common
splat asset ecosystem (degree-1 order is -y, +z, -x).
"""

from __future__ import annotations

import numpy as np

from .splats import SHCoefficients

__all__ = ["SH_C0", "eval_sh", "eval_sh_many"]

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)


def sh_basis(degree: int, dirs: np.ndarray) -> np.ndarray:
    """Basis values Y for unit directions; shape (N, (degree+1)^2)."""
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    cols = [np.full(len(dirs), SH_C0)]
    if degree >= 1:
        cols += [-SH_C1 * y, SH_C1 * z, -SH_C1 * x]
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        xy, yz, xz = x * y, y * z, x * z
        cols += [
            SH_C2[0] * xy,
            SH_C2[1] * yz,
            SH_C2[2] * (2.0 * zz - xx - yy),
            SH_C2[3] * xz,
            SH_C2[4] * (xx - yy),
        ]
    if degree >= 3:
        xx, yy, zz = x * x, y * y, z * z
        xy = x * y
        cols += [
            SH_C3[0] * y * (3.0 * xx - yy),
            SH_C3[1] * xy * z,
            SH_C3[2] * y * (4.0 * zz - xx - yy),
            SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
            SH_C3[4] * x * (4.0 * zz - xx - yy),
            SH_C3[5] * z * (xx - yy),
            SH_C3[6] * x * (xx - yy - 3.0 * zz),
        ]
    return np.stack(cols, axis=1)


def eval_sh(sh: SHCoefficients, view_dir: np.ndarray) -> np.ndarray:
    """Color for one unit view direction; unclamped (clamping happens at
    image write-out)."""
    d = np.asarray(view_dir, dtype=np.float64).reshape(3)
    basis = sh_basis(sh.degree, d[None, :])[0]
    return 0.5 + basis @ sh.coefficients


def eval_sh_many(degree: int, coefficients: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Vectorized per-splat color: coefficients (N, K, 3), dirs (N, 3)."""
    basis = sh_basis(degree, dirs)  # (N, K)
    return 0.5 + np.einsum("nk,nkc->nc", basis, coefficients)
