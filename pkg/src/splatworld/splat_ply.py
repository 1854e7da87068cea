"""Binary PLY reader/writer for Gaussian-splat assets.

Field layout (all float32, binary little-endian, element "vertex"):

    x y z nx ny nz f_dc_0..2 f_rest_0..(3*((d+1)^2-1)-1) opacity scale_0..2 rot_0..3

Normals are written as zeros and ignored on read. rot_* is a wxyz
quaternion, normalized on load. f_rest is channel-major (all red
coefficients, then green, then blue), matching the de-facto splat
asset export.
"""

from __future__ import annotations

import numpy as np

from .splats import SplatSet, degree_from_rest_count, sh_coeff_count

__all__ = ["parse_splat_ply", "write_splat_ply", "SplatPlyError"]


class SplatPlyError(ValueError):
    """Raised for malformed splat PLY documents."""


def _property_names(degree: int) -> list[str]:
    n_rest = 3 * (sh_coeff_count(degree) - 1)
    return (
        ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
        + [f"f_rest_{i}" for i in range(n_rest)]
        + ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
    )


def parse_splat_ply(data: bytes, frame_label: str = "") -> SplatSet:
    """Decode a conforming splat PLY into a SplatSet (one splat per vertex,
    file order preserved, quaternions normalized, SH degree inferred from
    the f_rest count)."""
    magic = b"ply\n"
    if not data.startswith(magic):
        raise SplatPlyError("malformed header: missing 'ply' magic at byte 0")
    end_tag = b"end_header\n"
    end = data.find(end_tag)
    if end < 0:
        raise SplatPlyError("malformed header: no 'end_header' line")
    body_start = end + len(end_tag)

    try:
        header_text = data[:end].decode("ascii")
    except UnicodeDecodeError as e:
        raise SplatPlyError(f"malformed header: non-ascii byte at offset {e.start}") from None

    n_vertices = None
    properties: list[str] = []
    element = None
    for line in header_text.splitlines()[1:]:
        parts = line.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            if parts[1:] != ["binary_little_endian", "1.0"]:
                raise SplatPlyError(f"malformed header: unsupported format {parts[1:]}")
        elif parts[0] == "element":
            if parts[1] != "vertex":
                raise SplatPlyError(f"unsupported element '{parts[1]}'")
            if element is not None:
                raise SplatPlyError("malformed header: duplicate vertex element")
            element = parts[1]
            n_vertices = int(parts[2])
        elif parts[0] == "property":
            if element is None:
                raise SplatPlyError(f"malformed header: property before element: '{line}'")
            if parts[1] != "float":
                raise SplatPlyError(f"property '{parts[2]}' has unsupported type '{parts[1]}'")
            properties.append(parts[2])
        else:
            raise SplatPlyError(f"malformed header: unrecognized line '{line}'")
    if n_vertices is None:
        raise SplatPlyError("malformed header: no vertex element")

    n_rest = sum(1 for p in properties if p.startswith("f_rest_"))
    degree = degree_from_rest_count(n_rest)
    expected = _property_names(degree)
    if properties != expected:
        missing = [p for p in expected if p not in properties]
        if missing:
            raise SplatPlyError(f"missing required property '{missing[0]}'")
        extra = [p for p in properties if p not in expected]
        if extra:
            raise SplatPlyError(f"unexpected property '{extra[0]}'")
        raise SplatPlyError("properties out of order; expected the standard splat layout")

    stride = 4 * len(properties)
    body = data[body_start:]
    if len(body) != stride * n_vertices:
        raise SplatPlyError(
            f"element count mismatch: header declares {n_vertices} vertices "
            f"({stride * n_vertices} bytes) but body has {len(body)} bytes "
            f"starting at offset {body_start}"
        )

    raw = np.frombuffer(body, dtype="<f4").reshape(n_vertices, len(properties)).astype(np.float64)
    cols = {name: i for i, name in enumerate(properties)}
    bad = ~np.isfinite(raw)
    if bad.any():
        vi, pi = np.argwhere(bad)[0]
        raise SplatPlyError(f"non-finite value in property '{properties[pi]}' at vertex {vi}")

    means = raw[:, [cols["x"], cols["y"], cols["z"]]]
    dc = raw[:, [cols["f_dc_0"], cols["f_dc_1"], cols["f_dc_2"]]]
    k_rest = sh_coeff_count(degree) - 1
    sh = np.zeros((n_vertices, sh_coeff_count(degree), 3))
    sh[:, 0] = dc
    if k_rest:
        rest = raw[:, cols["f_rest_0"]: cols["f_rest_0"] + 3 * k_rest]
        # channel-major on disk -> (coeff, channel) in memory
        sh[:, 1:] = rest.reshape(n_vertices, 3, k_rest).transpose(0, 2, 1)
    log_scales = raw[:, [cols["scale_0"], cols["scale_1"], cols["scale_2"]]]
    opacity = raw[:, cols["opacity"]]
    rot = raw[:, [cols["rot_0"], cols["rot_1"], cols["rot_2"], cols["rot_3"]]]

    return SplatSet(means, log_scales, rot, opacity, sh, degree, frame_label)


def write_splat_ply(splat_set: SplatSet) -> bytes:
    """Encode a SplatSet as a conforming splat PLY.

    parse_splat_ply(write_splat_ply(s)) reproduces s field-for-field
    (quaternions are stored normalized).
    """
    degree = splat_set.sh_degree
    names = _property_names(degree)
    n = len(splat_set)
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {n}\n"
        + "".join(f"property float {p}\n" for p in names)
        + "end_header\n"
    ).encode("ascii")

    raw = np.zeros((n, len(names)), dtype=np.float64)
    raw[:, 0:3] = splat_set.means
    raw[:, 6:9] = splat_set.sh[:, 0]
    k_rest = sh_coeff_count(degree) - 1
    if k_rest:
        raw[:, 9: 9 + 3 * k_rest] = splat_set.sh[:, 1:].transpose(0, 2, 1).reshape(n, 3 * k_rest)
    base = 9 + 3 * k_rest
    raw[:, base] = splat_set.opacity_logits
    raw[:, base + 1: base + 4] = splat_set.log_scales
    raw[:, base + 4: base + 8] = _snap_unit_f32(splat_set.rotations)
    return header + raw.astype("<f4").tobytes()


def _snap_unit_f32(quats: np.ndarray) -> np.ndarray:
    """Quaternions as float32 fixed points of normalize-then-round, so the
    byte round trip through parse (which renormalizes in float64) is an
    exact involution.

    Iterating round(normalize(.)) converges for almost all rows; the rare
    2-cycles are resolved by searching the +/-2 ulp neighborhood for a
    float32 vector whose float64 norm rounds back to itself.
    """
    w = np.asarray(quats, dtype=np.float64).astype(np.float32)
    for _ in range(4):
        u = w.astype(np.float64)
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        snapped = u.astype(np.float32)
        fixed = (snapped == w).all(axis=1)
        if fixed.all():
            return w.astype(np.float64)
        w = np.where(fixed[:, None], w, snapped)
    u = w.astype(np.float64)
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    fixed = (u.astype(np.float32) == w).all(axis=1)
    for i in np.nonzero(~fixed)[0]:
        w[i] = _snap_row_search(w[i])
    return w.astype(np.float64)


def _is_unit_fixed(w: np.ndarray) -> bool:
    u = w.astype(np.float64)
    u = u / np.linalg.norm(u)
    return bool(np.array_equal(u.astype(np.float32), w))


def _snap_row_search(w: np.ndarray) -> np.ndarray:
    import itertools

    best = None
    for steps in itertools.product((0, -1, 1, -2, 2), repeat=4):
        cand = w.copy()
        for k, n_ulp in enumerate(steps):
            target = np.float32(np.inf if n_ulp > 0 else -np.inf)
            for _ in range(abs(n_ulp)):
                cand[k] = np.nextafter(cand[k], target)
        if _is_unit_fixed(cand):
            err = abs(float(np.linalg.norm(cand.astype(np.float64))) - 1.0)
            if best is None or err < best[0]:
                best = (err, cand.copy())
    return best[1] if best is not None else w
