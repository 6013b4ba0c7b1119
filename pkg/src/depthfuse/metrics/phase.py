"""Phase congruency (log-Gabor filter bank) and the phase-congruency fusion metric Q_P."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .information import _check

EPS = 1e-4
STABILIZER = 1e-4
MIN_SIZE = 32


class ImageTooSmallError(ValueError):
    pass


@dataclass(frozen=True)
class PhaseCongruency:
    pc: np.ndarray        # mean phase congruency over orientations
    max_moment: np.ndarray
    min_moment: np.ndarray


def _freq_grid(n: int) -> np.ndarray:
    if n % 2:
        return np.arange(-(n - 1) / 2, (n - 1) / 2 + 1) / max(n - 1, 1)
    return np.arange(-n / 2, n / 2) / n


def phase_congruency(img, nscale: int = 4, norient: int = 6, min_wavelength: float = 3.0,
                     mult: float = 2.1, sigma_on_f: float = 0.55, k: float = 2.0,
                     cut_off: float = 0.5, g: float = 10.0) -> PhaseCongruency:
    """Kovesi-style phase congruency with principal moments of its covariance.

    Noise is estimated from the median response of the smallest-scale filters.
    """
    img = np.asarray(img, dtype=np.float64)
    rows, cols = img.shape
    imagefft = np.fft.fft2(img)

    x, y = np.meshgrid(_freq_grid(cols), _freq_grid(rows))
    radius = np.fft.ifftshift(np.sqrt(x ** 2 + y ** 2))
    theta = np.fft.ifftshift(np.arctan2(-y, x))
    radius[0, 0] = 1.0
    sintheta, costheta = np.sin(theta), np.cos(theta)

    lowpass = 1.0 / (1.0 + (radius / 0.45) ** 30)
    log_gabor = []
    for s in range(nscale):
        fo = 1.0 / (min_wavelength * mult ** s)
        lg = np.exp(-(np.log(radius / fo)) ** 2 / (2 * math.log(sigma_on_f) ** 2)) * lowpass
        lg[0, 0] = 0.0
        log_gabor.append(lg)

    pc_sum = np.zeros_like(img)
    covx2 = np.zeros_like(img)
    covy2 = np.zeros_like(img)
    covxy = np.zeros_like(img)

    for o in range(norient):
        angl = o * math.pi / norient
        ds = sintheta * math.cos(angl) - costheta * math.sin(angl)
        dc = costheta * math.cos(angl) + sintheta * math.sin(angl)
        dtheta = np.minimum(np.abs(np.arctan2(ds, dc)) * norient / 2, math.pi)
        spread = (np.cos(dtheta) + 1) / 2

        sum_e = np.zeros_like(img)
        sum_o = np.zeros_like(img)
        sum_an = np.zeros_like(img)
        responses = []
        tau = 0.0
        max_an = None
        for s in range(nscale):
            eo = np.fft.ifft2(imagefft * (log_gabor[s] * spread))
            responses.append(eo)
            an = np.abs(eo)
            sum_an += an
            sum_e += eo.real
            sum_o += eo.imag
            if s == 0:
                tau = float(np.median(sum_an)) / math.sqrt(math.log(4))
                max_an = an
            else:
                max_an = np.maximum(max_an, an)

        x_energy = np.sqrt(sum_e ** 2 + sum_o ** 2) + EPS
        mean_e = sum_e / x_energy
        mean_o = sum_o / x_energy
        energy = np.zeros_like(img)
        for eo in responses:
            e, od = eo.real, eo.imag
            energy += e * mean_e + od * mean_o - np.abs(e * mean_o - od * mean_e)

        total_tau = tau * (1 - (1 / mult) ** nscale) / (1 - 1 / mult)
        noise_mean = total_tau * math.sqrt(math.pi / 2)
        noise_sigma = total_tau * math.sqrt((4 - math.pi) / 2)
        energy = np.maximum(energy - (noise_mean + k * noise_sigma), 0.0)

        width = (sum_an / (max_an + EPS) - 1) / (nscale - 1)
        weight = 1.0 / (1 + np.exp((cut_off - width) * g))
        pc_o = weight * energy / (sum_an + EPS)

        pc_sum += pc_o
        cx = pc_o * math.cos(angl)
        cy = pc_o * math.sin(angl)
        covx2 += cx ** 2
        covy2 += cy ** 2
        covxy += cx * cy

    covx2 /= norient / 2
    covy2 /= norient / 2
    covxy = 4 * covxy / norient
    denom = np.sqrt(covxy ** 2 + (covx2 - covy2) ** 2) + EPS
    M = (covy2 + covx2 + denom) / 2
    m = (covy2 + covx2 - denom) / 2
    return PhaseCongruency(pc_sum / norient, M, m)


def correlation(x: np.ndarray, y: np.ndarray, c: float = STABILIZER) -> float:
    """Stabilized correlation coefficient (sigma_xy + C) / (sigma_x * sigma_y + C)."""
    x = x.ravel()
    y = y.ravel()
    n = x.size
    dx = x - x.mean()
    dy = y - y.mean()
    sxy = float(dx @ dy) / (n - 1)
    sx = math.sqrt(float(dx @ dx) / (n - 1))
    sy = math.sqrt(float(dy @ dy) / (n - 1))
    return (sxy + c) / (sx * sy + c)


def q_p(A, B, F, alpha: float = 1.0, beta: float = 1.0, gamma: float = 1.0) -> float:
    """Product of best correlations of phase congruency and its principal moments."""
    A, B, F = _check(A, B, F)
    if min(A.shape) < MIN_SIZE:
        raise ImageTooSmallError(f"Q_P needs at least {MIN_SIZE}x{MIN_SIZE} pixels, got {A.shape}")
    pa, pb, pf = phase_congruency(A), phase_congruency(B), phase_congruency(F)
    result = 1.0
    for attr, expo in (("pc", alpha), ("max_moment", beta), ("min_moment", gamma)):
        fa, fb, ff = getattr(pa, attr), getattr(pb, attr), getattr(pf, attr)
        fs = np.maximum(fa, fb)
        best = max(correlation(fa, ff), correlation(fb, ff), correlation(fs, ff))
        result *= best ** expo
    return float(result)
