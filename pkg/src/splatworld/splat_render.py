"""CPU forward renderer for splat sets.

Splats are projected to screen-space 2D Gaussians (EWA-style: mean by
the pinhole model, covariance by the projection Jacobian at the mean,
plus a +0.3 px^2 low-pass), depth-sorted by camera-space z of the mean,
and alpha-blended front to back with per-pixel transmittance. Evaluation
is restricted to each splat's 3-sigma ellipse, the per-splat screen
alpha is clamped to 0.99, and blending stops once transmittance falls
below 1e-4.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cameras import PinholeCamera
from .sh import eval_sh_many
from .splats import GaussianSplat, SplatSet, sigmoid

__all__ = ["Splat2D", "project_gaussian", "render_splats", "NEAR_PLANE"]

NEAR_PLANE = 0.01
LOWPASS_PX2 = 0.3
ALPHA_CLAMP = 0.99
TRANSMITTANCE_CUTOFF = 1e-4
SUPPORT_SIGMA = 3.0


@dataclass(frozen=True)
class Splat2D:
    mean2d: np.ndarray   # (u, v) pixels
    cov2d: np.ndarray    # symmetric 2x2, pixels^2, positive definite
    depth: float         # camera-space z of the mean, meters
    color: np.ndarray    # rgb, unclamped
    alpha: float         # activated opacity in (0, 1)


def _camera_basis(cam: PinholeCamera):
    r_c2w = cam.pose.matrix3
    w = r_c2w.T  # world -> camera rotation
    return w, cam.pose.translation


def project_gaussian(g: GaussianSplat, cam: PinholeCamera) -> Splat2D | None:
    """EWA projection of one splat; None when the mean is behind the near
    plane (0.01 m)."""
    w, cam_pos = _camera_basis(cam)
    pc = w @ (g.mean - cam_pos)
    if pc[2] < NEAR_PLANE:
        return None
    x, y, z = pc
    mean2d = np.array([cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy])

    from .splats import covariance_of

    sigma = covariance_of(g).matrix
    j = np.array(
        [
            [cam.fx / z, 0.0, -cam.fx * x / (z * z)],
            [0.0, cam.fy / z, -cam.fy * y / (z * z)],
        ]
    )
    jw = j @ w
    cov2d = jw @ sigma @ jw.T + LOWPASS_PX2 * np.eye(2)

    view_dir = g.mean - cam_pos
    view_dir = view_dir / np.linalg.norm(view_dir)
    from .sh import eval_sh

    return Splat2D(mean2d, cov2d, float(z), eval_sh(g.sh, view_dir), g.opacity)


def _project_all(splat_set: SplatSet, cam: PinholeCamera):
    """Vectorized projection of every splat; same math as project_gaussian."""
    w, cam_pos = _camera_basis(cam)
    pc = (splat_set.means - cam_pos) @ w.T
    keep = pc[:, 2] >= NEAR_PLANE
    if not np.any(keep):
        return None
    idx = np.nonzero(keep)[0]
    pc = pc[idx]
    x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
    mean2d = np.stack([cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy], axis=1)

    rot = splat_set.rotations[idx]
    ww, xx, yy, zz = rot[:, 0], rot[:, 1], rot[:, 2], rot[:, 3]
    r = np.empty((len(idx), 3, 3))
    r[:, 0, 0] = 1 - 2 * (yy * yy + zz * zz)
    r[:, 0, 1] = 2 * (xx * yy - ww * zz)
    r[:, 0, 2] = 2 * (xx * zz + ww * yy)
    r[:, 1, 0] = 2 * (xx * yy + ww * zz)
    r[:, 1, 1] = 1 - 2 * (xx * xx + zz * zz)
    r[:, 1, 2] = 2 * (yy * zz - ww * xx)
    r[:, 2, 0] = 2 * (xx * zz - ww * yy)
    r[:, 2, 1] = 2 * (yy * zz + ww * xx)
    r[:, 2, 2] = 1 - 2 * (xx * xx + yy * yy)
    s2 = np.exp(splat_set.log_scales[idx]) ** 2
    sigma = np.einsum("nij,nj,nkj->nik", r, s2, r)

    j = np.zeros((len(idx), 2, 3))
    j[:, 0, 0] = cam.fx / z
    j[:, 0, 2] = -cam.fx * x / (z * z)
    j[:, 1, 1] = cam.fy / z
    j[:, 1, 2] = -cam.fy * y / (z * z)
    jw = np.einsum("nij,jk->nik", j, w)
    cov2d = np.einsum("nij,njk,nlk->nil", jw, sigma, jw) + LOWPASS_PX2 * np.eye(2)

    dirs = splat_set.means[idx] - cam_pos
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    colors = eval_sh_many(splat_set.sh_degree, splat_set.sh[idx], dirs)
    alphas = sigmoid(splat_set.opacity_logits[idx])
    return mean2d, cov2d, z, colors, alphas, idx


def render_splats(splat_set: SplatSet, cam: PinholeCamera):
    """Render a splat set; returns (rgb image (H, W, 3) clamped to [0, 1],
    alpha mask (H, W) = 1 - final transmittance)."""
    h, wpx = cam.height, cam.width
    rgb = np.zeros((h, wpx, 3))
    transmittance = np.ones((h, wpx))

    projected = _project_all(splat_set, cam) if len(splat_set) else None
    if projected is None:
        return rgb, 1.0 - transmittance
    mean2d, cov2d, depth, colors, alphas, _ = projected

    # stable sort: ties in depth resolve by input index
    order = np.argsort(depth, kind="stable")

    det = cov2d[:, 0, 0] * cov2d[:, 1, 1] - cov2d[:, 0, 1] ** 2
    # axis-aligned bound of the 3-sigma ellipse
    rx = SUPPORT_SIGMA * np.sqrt(cov2d[:, 0, 0])
    ry = SUPPORT_SIGMA * np.sqrt(cov2d[:, 1, 1])

    for i in order:
        u, v = mean2d[i]
        x0 = max(0, int(np.floor(u - rx[i] - 0.5)))
        x1 = min(wpx - 1, int(np.ceil(u + rx[i] - 0.5)))
        y0 = max(0, int(np.floor(v - ry[i] - 0.5)))
        y1 = min(h - 1, int(np.ceil(v + ry[i] - 0.5)))
        if x0 > x1 or y0 > y1:
            continue
        t_tile = transmittance[y0:y1 + 1, x0:x1 + 1]
        live = t_tile >= TRANSMITTANCE_CUTOFF
        if not live.any():
            continue
        xs = np.arange(x0, x1 + 1) + 0.5 - u
        ys = np.arange(y0, y1 + 1) + 0.5 - v
        dx, dy = np.meshgrid(xs, ys)
        a, b, c = cov2d[i, 0, 0], cov2d[i, 0, 1], cov2d[i, 1, 1]
        # quadratic form of the inverse covariance
        maha2 = (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det[i]
        gauss = np.where(maha2 <= SUPPORT_SIGMA ** 2, np.exp(-0.5 * maha2), 0.0)
        screen_alpha = np.minimum(alphas[i] * gauss, ALPHA_CLAMP)
        screen_alpha = np.where(live, screen_alpha, 0.0)
        if not screen_alpha.any():
            continue
        weight = screen_alpha * t_tile
        rgb[y0:y1 + 1, x0:x1 + 1] += weight[:, :, None] * colors[i]
        t_tile *= 1.0 - screen_alpha

    return np.clip(rgb, 0.0, 1.0), 1.0 - transmittance
