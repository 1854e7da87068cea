"""Z-buffered CPU triangle rasterizer for the robot foreground.

Triangles are clipped against the near plane, projected through the
pinhole model, and filled at pixel centers (col + 0.5, row + 0.5) with
perspective-correct depth. Shading is flat Lambert under a headlight
co-located with the camera; the mask is 1 wherever any triangle covers
the pixel center and the depth map records the nearest camera-space z.
"""

from __future__ import annotations

import numpy as np

from .cameras import PinholeCamera
from .meshes import TriMesh
from .transforms import RigidPose

__all__ = ["rasterize_meshes"]

NEAR_PLANE = 0.01
AMBIENT = 0.25


def _clip_near(tri_cam: np.ndarray) -> list[np.ndarray]:
    """Sutherland-Hodgman clip of one camera-space triangle against
    z = NEAR_PLANE; returns 0-2 triangles."""
    inside = tri_cam[:, 2] >= NEAR_PLANE
    n_in = int(inside.sum())
    if n_in == 3:
        return [tri_cam]
    if n_in == 0:
        return []
    poly = []
    for k in range(3):
        a, b = tri_cam[k], tri_cam[(k + 1) % 3]
        ain, bin_ = inside[k], inside[(k + 1) % 3]
        if ain:
            poly.append(a)
        if ain != bin_:
            t = (NEAR_PLANE - a[2]) / (b[2] - a[2])
            poly.append(a + t * (b - a))
    out = []
    for k in range(1, len(poly) - 1):
        out.append(np.stack([poly[0], poly[k], poly[k + 1]]))
    return out


def rasterize_meshes(instances, cam: PinholeCamera):
    """Rasterize (TriMesh, RigidPose, rgb color) instances.

    Returns (image (H, W, 3) in [0, 1], coverage mask (H, W) in {0, 1},
    depth map (H, W) with +inf where empty).
    """
    h, w = cam.height, cam.width
    img = np.zeros((h, w, 3))
    mask = np.zeros((h, w))
    depth = np.full((h, w), np.inf)

    w2c = cam.pose.matrix3.T
    cam_pos = cam.pose.translation

    for mesh, pose, color in instances:
        color = np.asarray(color, dtype=np.float64).reshape(3)
        world_v = pose.apply(mesh.vertices)
        cam_v = (world_v - cam_pos) @ w2c.T
        for tri in mesh.triangles:
            for t_cam in _clip_near(cam_v[tri]):
                _fill_triangle(img, mask, depth, t_cam, color, cam)
    return np.clip(img, 0.0, 1.0), mask, depth


def _fill_triangle(img, mask, depth, t_cam, color, cam: PinholeCamera):
    h, w = mask.shape
    z = t_cam[:, 2]
    u = cam.fx * t_cam[:, 0] / z + cam.cx
    v = cam.fy * t_cam[:, 1] / z + cam.cy

    x0 = max(0, int(np.floor(u.min() - 0.5)))
    x1 = min(w - 1, int(np.ceil(u.max() - 0.5)))
    y0 = max(0, int(np.floor(v.min() - 0.5)))
    y1 = min(h - 1, int(np.ceil(v.max() - 0.5)))
    if x0 > x1 or y0 > y1:
        return

    # signed twice-area; reject degenerate screen triangles
    area = (u[1] - u[0]) * (v[2] - v[0]) - (u[2] - u[0]) * (v[1] - v[0])
    if abs(area) < 1e-12:
        return

    px = np.arange(x0, x1 + 1) + 0.5
    py = np.arange(y0, y1 + 1) + 0.5
    gx, gy = np.meshgrid(px, py)

    def edge(ax, ay, bx, by):
        return (bx - ax) * (gy - ay) - (by - ay) * (gx - ax)

    w0 = edge(u[1], v[1], u[2], v[2])
    w1 = edge(u[2], v[2], u[0], v[0])
    w2 = edge(u[0], v[0], u[1], v[1])
    if area > 0:
        covered = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
    else:
        covered = (w0 <= 0) & (w1 <= 0) & (w2 <= 0)
    if not covered.any():
        return

    b0, b1, b2 = w0 / area, w1 / area, w2 / area
    inv_z = b0 / z[0] + b1 / z[1] + b2 / z[2]  # linear in screen space
    with np.errstate(divide="ignore"):
        zpix = 1.0 / inv_z

    tile = depth[y0:y1 + 1, x0:x1 + 1]
    closer = covered & (zpix < tile)
    if not closer.any():
        return

    # flat headlight Lambert, double-sided
    n = np.cross(t_cam[1] - t_cam[0], t_cam[2] - t_cam[0])
    nn = np.linalg.norm(n)
    if nn < 1e-15:
        return
    centroid = t_cam.mean(axis=0)
    to_light = -centroid / np.linalg.norm(centroid)  # camera at the origin
    lambert = abs(float(n @ to_light)) / nn
    shade = (AMBIENT + (1.0 - AMBIENT) * lambert) * color

    tile[closer] = zpix[closer]
    mask[y0:y1 + 1, x0:x1 + 1][closer] = 1.0
    img_tile = img[y0:y1 + 1, x0:x1 + 1]
    img_tile[closer] = shade
