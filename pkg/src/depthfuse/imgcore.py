"""Raster containers, calibration records and file I/O.

Rasters are plain numpy arrays so every other module can use them directly:

* color image -- ``uint8`` array of shape ``(H, W, 3)``
* gray image  -- ``float64`` array of shape ``(H, W)``
* depth map   -- ``uint16`` array of shape ``(H, W)`` in millimetres, 0 = hole
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

BT601 = (0.299, 0.587, 0.114)

DEPTH_RANGE_MM = (500, 5000)

# Refuse headers describing more than this many samples (1 GiB of 16-bit data).
MAX_SAMPLES = 1 << 29


class RasterError(Exception):
    """Base class for raster reading/writing failures."""


class MalformedHeaderError(RasterError):
    pass


class DimensionOverflowError(RasterError):
    pass


class TruncatedPayloadError(RasterError):
    pass


class CalibrationError(ValueError):
    pass


# --------------------------------------------------------------------------
# raster validation
# --------------------------------------------------------------------------

def as_color_image(arr) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"color image must have shape (H, W, 3), got {arr.shape}")
    if arr.dtype != np.uint8:
        if np.any(arr < 0) or np.any(arr > 255):
            raise ValueError("color samples must lie in [0, 255]")
        arr = np.rint(arr).astype(np.uint8)
    return arr


def as_gray_image(arr) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"gray image must be a non-empty 2-D array, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("gray image contains non-finite samples")
    return arr


def as_depth_map(arr) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"depth map must be a non-empty 2-D array, got {arr.shape}")
    if arr.dtype != np.uint16:
        if np.any(arr < 0) or np.any(arr > 65535):
            raise ValueError("depth values must fit in 16 bits")
        arr = np.rint(arr).astype(np.uint16)
    return arr


def rgb_to_gray(img) -> np.ndarray:
    """Luma with ITU-R BT.601 weights, returned as float64."""
    img = as_color_image(img).astype(np.float64)
    return img[..., 0] * BT601[0] + img[..., 1] * BT601[1] + img[..., 2] * BT601[2]


def to_gray(img) -> np.ndarray:
    """Accept either a color or a gray raster and return gray float64."""
    arr = np.asarray(img)
    if arr.ndim == 3:
        return rgb_to_gray(arr)
    return as_gray_image(arr)


# --------------------------------------------------------------------------
# PGM / PNG
# --------------------------------------------------------------------------

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _parse_pgm(data: bytes) -> np.ndarray:
    if not data.startswith(b"P5"):
        raise MalformedHeaderError("not a binary PGM (missing P5 magic)")
    pos = 2
    fields = []
    for _ in range(3):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise MalformedHeaderError("PGM header ended early")
        tok = m.group(1)
        if not tok.isdigit():
            raise MalformedHeaderError(f"non-numeric PGM header field {tok!r}")
        fields.append(int(tok))
        pos = m.end()
    width, height, maxval = fields
    if pos < len(data) and not data[pos:pos + 1].isspace():
        raise MalformedHeaderError("PGM header must end with one whitespace byte")
    pos += 1
    if width <= 0 or height <= 0:
        raise MalformedHeaderError(f"invalid PGM dimensions {width}x{height}")
    if not 0 < maxval < 65536:
        raise MalformedHeaderError(f"invalid PGM maxval {maxval}")
    if width * height > MAX_SAMPLES:
        raise DimensionOverflowError(f"PGM dimensions {width}x{height} exceed limit")
    nbytes = 1 if maxval < 256 else 2
    need = width * height * nbytes
    payload = data[pos:pos + need]
    if len(payload) < need:
        raise TruncatedPayloadError(f"PGM payload has {len(payload)} of {need} bytes")
    if nbytes == 1:
        return np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()
    return np.frombuffer(payload, dtype=">u2").reshape(height, width).astype(np.uint16)


def _format_pgm(arr: np.ndarray, maxval: int) -> bytes:
    h, w = arr.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    if maxval < 256:
        return header + arr.astype(np.uint8).tobytes()
    return header + arr.astype(">u2").tobytes()


def read_raster(path) -> np.ndarray:
    """Read a PNG (color), 8-bit PGM (gray, float64) or 16-bit PGM (depth, uint16)."""
    path = Path(path)
    data = path.read_bytes()
    if data.startswith(b"P5"):
        arr = _parse_pgm(data)
        if arr.dtype == np.uint8:
            return arr.astype(np.float64)
        return arr
    if data.startswith(b"\x89PNG"):
        try:
            with Image.open(path) as im:
                im.load()
                if im.mode != "RGB":
                    im = im.convert("RGB")
                return np.array(im, dtype=np.uint8)
        except (OSError, SyntaxError) as exc:
            raise TruncatedPayloadError(f"{path}: {exc}") from exc
    if data.startswith(b"P"):
        raise MalformedHeaderError(f"{path}: only binary P5 PGM is supported")
    raise MalformedHeaderError(f"{path}: unrecognised raster format")


def write_raster(path, raster) -> None:
    """Write a raster, choosing the format from its dtype and shape.

    uint8 (H, W, 3) goes to PNG, uint16 (H, W) to 16-bit PGM, anything else
    2-D to 8-bit PGM after rounding and clipping to [0, 255].
    """
    path = Path(path)
    arr = np.asarray(raster)
    if arr.ndim == 3:
        arr = as_color_image(arr)
        Image.fromarray(arr, mode="RGB").save(path, format="PNG")
        return
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"cannot write raster of shape {arr.shape}")
    if arr.dtype == np.uint16:
        payload = _format_pgm(arr, 65535)
    else:
        payload = _format_pgm(np.clip(np.rint(arr), 0, 255), 255)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


# --------------------------------------------------------------------------
# calibration records
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    u0: float
    v0: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise CalibrationError("focal scale factors fx, fy must be positive")


@dataclass(frozen=True)
class Extrinsics:
    """Rigid transform taking IR-camera coordinates to color-camera coordinates."""

    R: tuple = (1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0)
    T: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64).reshape(-1)
        T = np.asarray(self.T, dtype=np.float64).reshape(-1)
        if R.size != 9 or T.size != 3:
            raise CalibrationError("R needs 9 entries and T needs 3")
        object.__setattr__(self, "R", tuple(float(x) for x in R))
        object.__setattr__(self, "T", tuple(float(x) for x in T))
        check_rotation(self.rotation)

    @property
    def rotation(self) -> np.ndarray:
        return np.array(self.R, dtype=np.float64).reshape(3, 3)

    @property
    def translation(self) -> np.ndarray:
        return np.array(self.T, dtype=np.float64)

    def inverse(self) -> "Extrinsics":
        R = self.rotation
        return Extrinsics(R=tuple(R.T.ravel()), T=tuple(-R.T @ self.translation))


def check_rotation(R, tol: float = 1e-6) -> None:
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3):
        raise CalibrationError("rotation must be 3x3")
    if not np.allclose(R @ R.T, np.eye(3), atol=tol) or abs(np.linalg.det(R) - 1.0) > tol:
        raise CalibrationError("rotation is not orthonormal with determinant 1")


@dataclass(frozen=True)
class OpticsConfig:
    """Thin-lens parameters of the color camera, all lengths in mm."""

    focal_length: float = 24.0
    f_number: float = 4.0
    coc_diameter: float = 0.019
    pixel_pitch: float = 0.02

    def __post_init__(self):
        for name in ("focal_length", "f_number", "coc_diameter", "pixel_pitch"):
            if not getattr(self, name) > 0:
                raise CalibrationError(f"{name} must be strictly positive")

    @property
    def aperture_diameter(self) -> float:
        return self.focal_length / self.f_number


@dataclass(frozen=True)
class Calibration:
    ir: CameraIntrinsics
    color: CameraIntrinsics
    extrinsics: Extrinsics = field(default_factory=Extrinsics)
    optics: OpticsConfig = field(default_factory=OpticsConfig)

    def to_dict(self) -> dict:
        o = self.optics
        return {
            "ir_intrinsics": asdict(self.ir),
            "color_intrinsics": asdict(self.color),
            "extrinsics": {"R": list(self.extrinsics.R), "T": list(self.extrinsics.T)},
            "optics": {
                "f_mm": o.focal_length,
                "f_number": o.f_number,
                "coc_mm": o.coc_diameter,
                "pixel_pitch_mm": o.pixel_pitch,
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Calibration":
        try:
            ir = CameraIntrinsics(**{k: float(doc["ir_intrinsics"][k]) for k in ("fx", "fy", "u0", "v0")})
            color = CameraIntrinsics(**{k: float(doc["color_intrinsics"][k]) for k in ("fx", "fy", "u0", "v0")})
            ext = doc.get("extrinsics", {})
            extrinsics = Extrinsics(R=tuple(ext.get("R", Extrinsics.R)), T=tuple(ext.get("T", Extrinsics.T)))
            opt = doc.get("optics", {})
            optics = OpticsConfig(
                focal_length=float(opt.get("f_mm", 24.0)),
                f_number=float(opt.get("f_number", 4.0)),
                coc_diameter=float(opt.get("coc_mm", 0.019)),
                pixel_pitch=float(opt.get("pixel_pitch_mm", 0.02)),
            )
        except (KeyError, TypeError) as exc:
            raise CalibrationError(f"calibration document is missing or has bad field: {exc}") from exc
        return cls(ir=ir, color=color, extrinsics=extrinsics, optics=optics)

    @classmethod
    def identity(cls, width: int, height: int, f_px: float = 525.0, optics: OpticsConfig | None = None):
        intr = CameraIntrinsics(f_px, f_px, (width - 1) / 2.0, (height - 1) / 2.0)
        return cls(ir=intr, color=intr, optics=optics or OpticsConfig())


def load_calibration(path) -> Calibration:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CalibrationError(f"{path}: invalid JSON ({exc})") from exc
    return Calibration.from_dict(doc)


def save_calibration(path, calib: Calibration) -> None:
    Path(path).write_text(json.dumps(calib.to_dict(), indent=2))
