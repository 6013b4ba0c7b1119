"""Synthetic multi-focus scenes with known ground truth.

A scene is a stack of fronto-parallel textured layers.  Each source image of
the stack is rendered by blurring every layer with a Gaussian whose width
follows the thin-lens circle of confusion for that source's focus distance.
The depth map can be degraded the way a structured-light sensor would
degrade it: hole bands left of depth edges, an extrinsic offset between the
depth and color cameras, and depth jitter.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .depthprep import align_depth
from .dofseg import back_dof, front_dof
from .imgcore import (Calibration, CameraIntrinsics, Extrinsics, OpticsConfig, as_depth_map,
                      save_calibration, write_raster, DEPTH_RANGE_MM)

DISCONTINUITY_MM = 100


def coc_diameter(u: float, u_f: float, o: OpticsConfig) -> float:
    """Blur-circle diameter (mm, on the sensor) of a point at ``u`` when focused at ``u_f``."""
    f = o.focal_length
    if u <= f or u_f <= f:
        raise ValueError("object and focus distances must exceed the focal length")
    return (f * f / o.f_number) * abs(u - u_f) / (u * (u_f - f))


@dataclass
class Layer:
    depth: float
    rect: tuple | None = None  # (x0, y0, x1, y1), end-exclusive; None covers the frame
    texture_seed: int = 0


@dataclass
class Degradation:
    hole_band_px: int = 0
    extrinsics: Extrinsics = field(default_factory=Extrinsics)
    depth_noise_mm: float = 0.0
    seed: int = 0


@dataclass
class SceneSpec:
    layers: list
    width: int = 640
    height: int = 480
    optics: OpticsConfig = field(default_factory=OpticsConfig)
    focus_depths: list = field(default_factory=list)
    degradation: Degradation = field(default_factory=Degradation)
    focal_px: float = 525.0

    def __post_init__(self):
        if not self.layers:
            raise ValueError("a scene needs at least one layer")
        if not self.focus_depths:
            raise ValueError("a scene needs at least one focus depth")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")
        lo, hi = DEPTH_RANGE_MM
        for layer in self.layers:
            if not lo <= layer.depth <= hi:
                raise ValueError(f"layer depth {layer.depth} mm outside sensor range {lo}-{hi} mm")
        for u in self.focus_depths:
            if u <= self.optics.focal_length:
                raise ValueError("focus depths must exceed the focal length")

    @property
    def calibration(self) -> Calibration:
        intr = CameraIntrinsics(self.focal_px, self.focal_px, (self.width - 1) / 2.0, (self.height - 1) / 2.0)
        return Calibration(ir=intr, color=intr, extrinsics=self.degradation.extrinsics, optics=self.optics)

    def to_dict(self) -> dict:
        deg = self.degradation
        return {
            "width": self.width,
            "height": self.height,
            "focal_px": self.focal_px,
            "optics": {
                "f_mm": self.optics.focal_length,
                "f_number": self.optics.f_number,
                "coc_mm": self.optics.coc_diameter,
                "pixel_pitch_mm": self.optics.pixel_pitch,
            },
            "layers": [
                {"depth": l.depth, "rect": list(l.rect) if l.rect is not None else None, "texture_seed": l.texture_seed}
                for l in self.layers
            ],
            "focus_depths": list(self.focus_depths),
            "degradation": {
                "hole_band_px": deg.hole_band_px,
                "extrinsics": {"R": list(deg.extrinsics.R), "T": list(deg.extrinsics.T)},
                "depth_noise_mm": deg.depth_noise_mm,
                "seed": deg.seed,
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SceneSpec":
        opt = doc.get("optics", {})
        optics = OpticsConfig(
            focal_length=float(opt.get("f_mm", 24.0)),
            f_number=float(opt.get("f_number", 4.0)),
            coc_diameter=float(opt.get("coc_mm", 0.019)),
            pixel_pitch=float(opt.get("pixel_pitch_mm", 0.02)),
        )
        layers = [
            Layer(float(l["depth"]), tuple(l["rect"]) if l.get("rect") is not None else None,
                  int(l.get("texture_seed", i)))
            for i, l in enumerate(doc["layers"])
        ]
        d = doc.get("degradation", {})
        ext = d.get("extrinsics", {})
        degradation = Degradation(
            hole_band_px=int(d.get("hole_band_px", 0)),
            extrinsics=Extrinsics(R=tuple(ext.get("R", Extrinsics.R)), T=tuple(ext.get("T", Extrinsics.T))),
            depth_noise_mm=float(d.get("depth_noise_mm", 0.0)),
            seed=int(d.get("seed", 0)),
        )
        return cls(
            layers=layers,
            width=int(doc.get("width", 640)),
            height=int(doc.get("height", 480)),
            optics=optics,
            focus_depths=[float(u) for u in doc["focus_depths"]],
            degradation=degradation,
            focal_px=float(doc.get("focal_px", 525.0)),
        )


def load_scene(path) -> SceneSpec:
    return SceneSpec.from_dict(json.loads(Path(path).read_text()))


def layer_texture(seed: int, height: int, width: int) -> np.ndarray:
    """Deterministic colored texture, float64 (H, W, 3) within [0, 255]."""
    rng = np.random.default_rng(seed)
    base = rng.uniform(70, 180, size=3)
    coarse = ndimage.gaussian_filter(rng.standard_normal((height, width)), 3.0)
    fine = ndimage.gaussian_filter(rng.standard_normal((height, width)), 0.8)
    coarse /= coarse.std() or 1.0
    fine /= fine.std() or 1.0
    gains = rng.uniform(0.6, 1.0, size=3)
    tex = base + (18 * coarse + 30 * fine)[..., None] * gains
    return np.clip(tex, 0, 255)


def _layer_mask(layer: Layer, height: int, width: int) -> np.ndarray:
    mask = np.zeros((height, width), bool)
    if layer.rect is None:
        mask[:] = True
    else:
        x0, y0, x1, y1 = layer.rect
        mask[max(y0, 0):max(y1, 0), max(x0, 0):max(x1, 0)] = True
    return mask


def blur_sigma_px(u: float, u_f: float, o: OpticsConfig) -> float:
    return coc_diameter(u, u_f, o) / (2.0 * o.pixel_pitch)


def render_stack(spec: SceneSpec):
    """Render (sources, ground_truth, true_depth) for a scene.

    Layers are composited far to near; occlusion boundaries are hard (the
    blur of a layer never spills over a nearer one).
    """
    h, w = spec.height, spec.width
    order = sorted(range(len(spec.layers)), key=lambda i: -spec.layers[i].depth)
    textures = {i: layer_texture(spec.layers[i].texture_seed, h, w) for i in order}
    masks = {i: _layer_mask(spec.layers[i], h, w) for i in order}

    truth = np.zeros((h, w, 3))
    depth = np.zeros((h, w), np.uint16)
    for i in order:
        truth[masks[i]] = textures[i][masks[i]]
        depth[masks[i]] = int(round(spec.layers[i].depth))

    sources = []
    for u_f in spec.focus_depths:
        img = np.zeros((h, w, 3))
        for i in order:
            sigma = blur_sigma_px(spec.layers[i].depth, u_f, spec.optics)
            tex = textures[i]
            if sigma > 1e-6:
                tex = ndimage.gaussian_filter(tex, (sigma, sigma, 0), mode="nearest")
            img[masks[i]] = tex[masks[i]]
        sources.append(np.clip(np.rint(img), 0, 255).astype(np.uint8))
    return sources, np.clip(np.rint(truth), 0, 255).astype(np.uint8), depth


def hole_band_mask(depth: np.ndarray, band: int) -> np.ndarray:
    """Pixels within ``band`` columns left of a horizontal depth jump > 100 mm."""
    d = depth.astype(np.int32)
    jump = np.abs(d[:, 1:] - d[:, :-1]) > DISCONTINUITY_MM
    mask = np.zeros(depth.shape, bool)
    w = depth.shape[1]
    for k in range(min(band, w - 1)):
        mask[:, : w - 1 - k] |= jump[:, k:]
    return mask


def degrade_depth(true_depth, deg: Degradation, calib: Calibration | None = None) -> np.ndarray:
    """Corrupt a color-frame depth map into what the depth sensor would report."""
    d = as_depth_map(true_depth).copy()
    if deg.hole_band_px > 0:
        d[hole_band_mask(d, deg.hole_band_px)] = 0
    ext = deg.extrinsics
    if not (np.allclose(ext.rotation, np.eye(3)) and not np.any(ext.translation)):
        if calib is None:
            h, w = d.shape
            calib = Calibration.identity(w, h)
        d = align_depth(d, calib.color, calib.ir, ext.inverse())
    if deg.depth_noise_mm > 0:
        rng = np.random.default_rng(deg.seed)
        n = int(round(deg.depth_noise_mm))
        jitter = rng.integers(-n, n + 1, size=d.shape)
        valid = d > 0
        noisy = np.clip(d.astype(np.int64) + jitter, 1, 65535)
        d = np.where(valid, noisy, 0).astype(np.uint16)
    return d


def focus_assignment(spec: SceneSpec) -> list[int]:
    """Index of the source with the smallest blur for each layer."""
    return [
        int(np.argmin([coc_diameter(l.depth, u_f, spec.optics) for u_f in spec.focus_depths]))
        for l in spec.layers
    ]


def ground_truth_labels(spec: SceneSpec) -> np.ndarray:
    h, w = spec.height, spec.width
    assign = focus_assignment(spec)
    labels = np.zeros((h, w), np.uint8)
    for i in sorted(range(len(spec.layers)), key=lambda i: -spec.layers[i].depth):
        labels[_layer_mask(spec.layers[i], h, w)] = assign[i]
    return labels


def within_dof(depth: float, focus: float, o: OpticsConfig) -> bool:
    try:
        b = back_dof(focus, o)
    except ValueError:
        b = np.inf
    return focus - front_dof(focus, o) <= depth <= focus + b


def random_two_layer_scene(seed: int, width: int = 640, height: int = 480,
                           hole_band_px: int = 4, baseline_mm: float = 25.0,
                           depth_noise_mm: float = 3.0) -> SceneSpec:
    """Background plane plus one rectangle, each focus depth inside one layer's DoF."""
    rng = np.random.default_rng(seed)
    optics = OpticsConfig()
    back = float(rng.integers(2000, 4000))
    front = float(rng.integers(700, 1300))
    rw = int(rng.integers(width // 4, width // 2))
    rh = int(rng.integers(height // 4, height // 2))
    x0 = int(rng.integers(width // 8, width - rw - width // 8))
    y0 = int(rng.integers(height // 8, height - rh - height // 8))
    focus = []
    for u in (front, back):
        span = 0.2 * min(front_dof(u, optics), back_dof(u, optics))
        focus.append(u + float(rng.uniform(-span, span)))
    if rng.random() < 0.5:
        focus.reverse()
    return SceneSpec(
        layers=[Layer(back, None, int(rng.integers(1 << 30))),
                Layer(front, (x0, y0, x0 + rw, y0 + rh), int(rng.integers(1 << 30)))],
        width=width,
        height=height,
        optics=optics,
        focus_depths=focus,
        degradation=Degradation(hole_band_px, Extrinsics(T=(baseline_mm, 0.0, 0.0)), depth_noise_mm,
                                int(rng.integers(1 << 30))),
    )


def write_bundle(spec: SceneSpec, out_dir) -> dict:
    """Render a scene and write every artifact plus ``manifest.json``; return the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sources, truth, depth = render_stack(spec)
    calib = spec.calibration
    raw = degrade_depth(depth, spec.degradation, calib)
    files = {"sources": []}
    for i, img in enumerate(sources):
        name = f"source_{i:02d}.png"
        write_raster(out / name, img)
        files["sources"].append(name)
    write_raster(out / "ground_truth.png", truth)
    write_raster(out / "true_depth.pgm", depth)
    write_raster(out / "raw_depth.pgm", raw)
    write_raster(out / "ground_truth_labels.pgm", ground_truth_labels(spec))
    save_calibration(out / "calibration.json", calib)
    (out / "scene.json").write_text(json.dumps(spec.to_dict(), indent=2))
    files.update(ground_truth="ground_truth.png", true_depth="true_depth.pgm", raw_depth="raw_depth.pgm",
                 ground_truth_labels="ground_truth_labels.pgm", calibration="calibration.json",
                 scene="scene.json", run_config="run.json")
    run_config = {"calibration": "calibration.json", "depth": "raw_depth.pgm", "sources": files["sources"]}
    (out / "run.json").write_text(json.dumps(run_config, indent=2))
    manifest = {
        "files": files,
        "focus_depths": list(spec.focus_depths),
        "layer_focus_index": focus_assignment(spec),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest
