"""Chen-Blum perceptual fusion metric Q_CB."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .information import _check

CSF_CHOICES = ("dog", "mannos-sakrison", "barton")


@dataclass(frozen=True)
class QcbParams:
    csf: str = "dog"
    sigma_k: float = 2.0
    t: float = 1.0
    h: float = 1.0
    p: float = 3.0
    q: float = 2.0
    Z: float = 1e-4
    # visual field covered by the image width, degrees
    view_degrees: float = 30.0

    def __post_init__(self):
        if self.csf not in CSF_CHOICES:
            raise ValueError(f"csf must be one of {CSF_CHOICES}")
        if not (self.sigma_k > 0 and self.Z > 0):
            raise ValueError("sigma_k and Z must be positive")


def csf_response(r: np.ndarray, kind: str) -> np.ndarray:
    """Contrast sensitivity as a function of radial frequency (cycles/degree)."""
    if kind == "dog":
        return np.exp(-(r / 15.3870) ** 2) - 0.7622 * np.exp(-(r / 1.3456) ** 2)
    if kind == "mannos-sakrison":
        return 2.6 * (0.0192 + 0.114 * r) * np.exp(-(0.114 * r) ** 1.1)
    if kind == "barton":
        safe = np.where(r == 0, 1.0, r)
        s = (0.008 / safe ** 3 + 1) ** -0.2 * 1.42 * safe * np.exp(-0.3 * safe * np.sqrt(1 + 0.06 * np.exp(0.3 * safe)))
        return np.where(r == 0, 0.0, s)
    raise ValueError(f"unknown CSF {kind!r}")


def _next_pow2(n: int) -> int:
    return 1 << (n - 1).bit_length()


def csf_filter(img: np.ndarray, p: QcbParams) -> np.ndarray:
    """Filter ``img`` by the CSF in the frequency domain, edge-padded (centred) to powers of two."""
    h, w = img.shape
    H, W = _next_pow2(h), _next_pow2(w)
    top, left = (H - h) // 2, (W - w) // 2
    padded = np.pad(img, ((top, H - h - top), (left, W - w - left)), mode="edge")
    ppd = w / p.view_degrees
    fy = np.fft.fftfreq(H)[:, None] * ppd
    fx = np.fft.fftfreq(W)[None, :] * ppd
    S = csf_response(np.sqrt(fx ** 2 + fy ** 2), p.csf)
    out = np.fft.ifft2(np.fft.fft2(padded) * S).real
    return out[top:top + h, left:left + w]


def peli_contrast(img: np.ndarray, sigma_k: float) -> np.ndarray:
    """|G_k * I / G_{k+1} * I - 1| with sigma_{k+1} = 2 sigma_k, replicate borders."""
    num = ndimage.gaussian_filter(img, sigma_k, mode="nearest")
    den = ndimage.gaussian_filter(img, 2 * sigma_k, mode="nearest")
    with np.errstate(divide="ignore", invalid="ignore"):
        c = num / den - 1.0
    return np.abs(np.where(den == 0, 0.0, c))


def masked_contrast(img: np.ndarray, p: QcbParams) -> np.ndarray:
    c = peli_contrast(csf_filter(img, p), p.sigma_k)
    return p.t * c ** p.p / (p.h * c ** p.q + p.Z)


def _ratio(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    lo = np.minimum(x, y)
    hi = np.maximum(x, y)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(hi == 0, 1.0, lo / hi)


def quality_map(A, B, F, p: QcbParams | None = None) -> np.ndarray:
    p = p or QcbParams()
    A, B, F = _check(A, B, F)
    ca, cb, cf = (masked_contrast(x, p) for x in (A, B, F))
    sa, sb = ca ** 2, cb ** 2
    tot = sa + sb
    with np.errstate(divide="ignore", invalid="ignore"):
        lam_a = np.where(tot == 0, 0.5, sa / tot)
        lam_b = np.where(tot == 0, 0.5, sb / tot)
    return lam_a * _ratio(ca, cf) + lam_b * _ratio(cb, cf)


def q_cb(A, B, F, p: QcbParams | None = None) -> float:
    """Mean of the Chen-Blum global quality map."""
    return float(quality_map(A, B, F, p).mean())
