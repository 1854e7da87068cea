"""Image representations and I/O.

Images are float64 arrays in [0, 1]: (H, W, 3) for rgb, (H, W) for
masks and depth (+inf where empty). PNGs are 8-bit with values
quantized by round(v * 255); depth maps use a 16-byte binary header
{magic "DPTH", width u32, height u32, reserved u32} followed by
row-major float32.
"""

from __future__ import annotations

import struct

import numpy as np
from PIL import Image as PILImage

__all__ = [
    "composite",
    "photometric_l1",
    "masked_photometric_l1",
    "mean_photometric_l1",
    "save_png",
    "load_png",
    "save_mask_png",
    "load_mask_png",
    "encode_png",
    "save_depth",
    "load_depth",
]

DEPTH_MAGIC = b"DPTH"


def _check_rgb(img: np.ndarray, name: str) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"{name} must have shape (H, W, 3), got {img.shape}")
    return img


def _check_same_shape(a, b, what: str):
    if a.shape[:2] != b.shape[:2]:
        raise ValueError(f"dimension mismatch in {what}: {a.shape[:2]} vs {b.shape[:2]}")


def composite(robot: np.ndarray, mask: np.ndarray, background: np.ndarray) -> np.ndarray:
    """Alpha-composite the robot foreground over the background:
    out = M*robot + (1 - M)*background, per pixel per channel."""
    robot = _check_rgb(robot, "robot")
    background = _check_rgb(background, "background")
    mask = np.asarray(mask, dtype=np.float64)
    _check_same_shape(robot, background, "composite")
    _check_same_shape(robot, mask, "composite mask")
    m = mask[:, :, None]
    return m * robot + (1.0 - m) * background


def photometric_l1(rendered: np.ndarray, target: np.ndarray) -> float:
    """Sum of absolute differences over all pixels and channels."""
    rendered = _check_rgb(rendered, "rendered")
    target = _check_rgb(target, "target")
    _check_same_shape(rendered, target, "photometric_l1")
    return float(np.abs(rendered - target).sum())


def mean_photometric_l1(rendered: np.ndarray, target: np.ndarray) -> float:
    """Mean-normalized variant of photometric_l1."""
    return photometric_l1(rendered, target) / rendered.size


def masked_photometric_l1(rendered: np.ndarray, target: np.ndarray, mask: np.ndarray) -> float:
    """Sum of |M*rendered - M*target|; suppresses unmasked regions."""
    rendered = _check_rgb(rendered, "rendered")
    target = _check_rgb(target, "target")
    mask = np.asarray(mask, dtype=np.float64)
    _check_same_shape(rendered, target, "masked_photometric_l1")
    _check_same_shape(rendered, mask, "masked_photometric_l1 mask")
    m = mask[:, :, None]
    return float(np.abs(m * rendered - m * target).sum())


def encode_png(rgb: np.ndarray) -> bytes:
    import io

    rgb = _check_rgb(rgb, "image")
    quantized = np.rint(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    PILImage.fromarray(quantized, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def save_png(path, rgb: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(encode_png(rgb))


def load_png(path) -> np.ndarray:
    with PILImage.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_mask_png(path, mask: np.ndarray) -> None:
    quantized = np.rint(np.clip(np.asarray(mask, dtype=np.float64), 0.0, 1.0) * 255.0)
    PILImage.fromarray(quantized.astype(np.uint8), mode="L").save(path, format="PNG")


def load_mask_png(path) -> np.ndarray:
    with PILImage.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float64)
    return arr / 255.0


def save_depth(path, depth: np.ndarray) -> None:
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2:
        raise ValueError(f"depth map must be 2-D, got shape {depth.shape}")
    h, w = depth.shape
    with open(path, "wb") as f:
        f.write(DEPTH_MAGIC + struct.pack("<III", w, h, 0))
        f.write(depth.astype("<f4").tobytes())


def load_depth(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.read(16)
        if len(header) != 16 or header[:4] != DEPTH_MAGIC:
            raise ValueError("not a depth map file (bad magic)")
        w, h, _ = struct.unpack("<III", header[4:])
        body = f.read()
    if len(body) != 4 * w * h:
        raise ValueError(f"depth payload size {len(body)} != {4 * w * h}")
    return np.frombuffer(body, dtype="<f4").reshape(h, w).astype(np.float64)
