"""Depth map preprocessing: registration to the color camera and hole filling."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numba
import numpy as np

from .imgcore import Calibration, CameraIntrinsics, Extrinsics, as_depth_map, check_rotation

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ADParams:
    lam: float = 0.25
    K: float = 30.0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 0.25:
            raise ValueError("diffusion rate must lie in [0, 0.25] for stability")
        if not self.K > 0:
            raise ValueError("conduction scale K must be positive")


@dataclass
class AlignDiagnostics:
    projected: int = 0
    behind_camera: int = 0
    off_image: int = 0
    collisions: int = 0


@numba.njit(cache=True)
def _reproject(raw, ir, color, R, T, oh, ow):
    """Back-project, transform, and splat with a nearest-depth z-buffer.

    ``ir`` and ``color`` are (fx, fy, u0, v0).  Returns the color-frame map and
    (projected, behind_camera, off_image, collisions) counts.
    """
    h, w = raw.shape
    out = np.zeros((oh, ow), np.uint16)
    projected = behind = off = collisions = 0
    for v in range(h):
        for u in range(w):
            z = raw[v, u]
            if z == 0:
                continue
            Z = np.float64(z)
            X = (u - ir[2]) * Z / ir[0]
            Y = (v - ir[3]) * Z / ir[1]
            Xc = R[0, 0] * X + R[0, 1] * Y + R[0, 2] * Z + T[0]
            Yc = R[1, 0] * X + R[1, 1] * Y + R[1, 2] * Z + T[1]
            Zc = R[2, 0] * X + R[2, 1] * Y + R[2, 2] * Z + T[2]
            if not Zc > 0:
                behind += 1
                continue
            uc = np.rint(Xc / Zc * color[0] + color[2])
            vc = np.rint(Yc / Zc * color[1] + color[3])
            zq = np.rint(Zc)
            if not (uc >= 0 and uc < ow and vc >= 0 and vc < oh and zq >= 1 and zq <= 65535):
                off += 1
                continue
            projected += 1
            iu = int(uc)
            iv = int(vc)
            cur = out[iv, iu]
            if cur == 0:
                out[iv, iu] = np.uint16(zq)
            else:
                collisions += 1
                if zq < cur:
                    out[iv, iu] = np.uint16(zq)
    return out, projected, behind, off, collisions


def _intr(c: CameraIntrinsics) -> np.ndarray:
    return np.array([c.fx, c.fy, c.u0, c.v0], np.float64)


def align_depth_with_diagnostics(raw, ir: CameraIntrinsics, color: CameraIntrinsics,
                                 ext: Extrinsics, out_size=None):
    """Reproject ``raw`` into the color camera; also return an :class:`AlignDiagnostics`.

    ``out_size`` is ``(width, height)`` and defaults to the input size.
    """
    raw = as_depth_map(raw)
    R = ext.rotation
    check_rotation(R)
    h, w = raw.shape
    ow, oh = out_size if out_size is not None else (w, h)
    out, projected, behind, off, collisions = _reproject(
        raw, _intr(ir), _intr(color), np.ascontiguousarray(R, np.float64),
        np.asarray(ext.translation, np.float64), int(oh), int(ow))
    diag = AlignDiagnostics(projected, behind, off, collisions)
    if behind:
        log.warning("align_depth dropped %d pixels behind the color camera", behind)
    return out, diag


def align_depth(raw, ir: CameraIntrinsics, color: CameraIntrinsics, ext: Extrinsics, out_size=None):
    return align_depth_with_diagnostics(raw, ir, color, ext, out_size)[0]


@numba.njit(cache=True)
def _fill_zeros_with_max(d):
    h, w = d.shape
    out = d.copy()
    for y in range(h):
        for x in range(w):
            if d[y, x] != 0:
                continue
            m = 0
            for yy in range(max(y - 1, 0), min(y + 2, h)):
                for xx in range(max(x - 1, 0), min(x + 2, w)):
                    if d[yy, xx] > m:
                        m = d[yy, xx]
            out[y, x] = m
    return out


def dilate_fill(aligned) -> np.ndarray:
    """Fill zero pixels with the 3x3 neighbourhood maximum; valid pixels are kept."""
    return _fill_zeros_with_max(as_depth_map(aligned))


@numba.njit(cache=True)
def _ad_pass(d, lam, K):
    h, w = d.shape
    out = d.astype(np.float64)
    hole = d == 0
    unresolved = np.zeros((h, w), np.bool_)
    for y in range(h):
        for x in range(w):
            if not hole[y, x]:
                continue
            rx = x - 2
            if rx < 0 or out[y, rx] == 0:
                unresolved[y, x] = True
                continue
            c = out[y, rx]
            acc = 0.0
            # the four neighbours of the reference pixel; holes and
            # out-of-range neighbours contribute nothing
            if rx - 1 >= 0 and out[y, rx - 1] != 0:
                dn = out[y, rx - 1] - c
                acc += np.exp(-(dn / K) ** 2) * dn
            if out[y, rx + 1] != 0:
                ds = out[y, rx + 1] - c
                acc += np.exp(-(ds / K) ** 2) * ds
            if y - 1 >= 0 and out[y - 1, rx] != 0:
                dw = out[y - 1, rx] - c
                acc += np.exp(-(dw / K) ** 2) * dw
            if y + 1 < h and out[y + 1, rx] != 0:
                de = out[y + 1, rx] - c
                acc += np.exp(-(de / K) ** 2) * de
            v = np.floor(c + lam * acc + 0.5)
            out[y, x] = min(max(v, 1.0), 65535.0)

    # fallback: nearest valid to the left, then to the right, then in the column
    pending_col = False
    for y in range(h):
        for x in range(w):
            if not unresolved[y, x] or out[y, x] != 0:
                continue
            found = False
            for xx in range(x - 1, -1, -1):
                if out[y, xx] != 0:
                    out[y, x] = out[y, xx]
                    found = True
                    break
            if not found:
                for xx in range(x + 1, w):
                    if out[y, xx] != 0:
                        out[y, x] = out[y, xx]
                        found = True
                        break
            if not found:
                pending_col = True
    if pending_col:
        for y in range(h):
            for x in range(w):
                if out[y, x] != 0:
                    continue
                for dist in range(1, h):
                    if y - dist >= 0 and out[y - dist, x] != 0:
                        out[y, x] = out[y - dist, x]
                        break
                    if y + dist < h and out[y + dist, x] != 0:
                        out[y, x] = out[y + dist, x]
                        break
    return out.astype(np.uint16)


def ad_hole_fill(d, p: ADParams | None = None) -> np.ndarray:
    """Single raster-order anisotropic-diffusion pass that fills zero-depth holes.

    Each hole at column ``x`` is diffused from the reference pixel two columns
    to its left, using values already filled earlier in the pass.
    """
    p = p or ADParams()
    d = as_depth_map(d)
    if not np.any(d):
        raise ValueError("depth map has no valid pixels to fill from")
    if d.all():
        return d.copy()
    return _ad_pass(d, float(p.lam), float(p.K))


def preprocess(raw, calib: Calibration, p: ADParams | None = None, out_size=None) -> np.ndarray:
    """align_depth -> dilate_fill -> ad_hole_fill; the result has no zero pixels."""
    aligned = align_depth(raw, calib.ir, calib.color, calib.extrinsics, out_size)
    return ad_hole_fill(dilate_fill(aligned), p)
