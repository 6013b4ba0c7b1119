"""Gradient-based edge preservation metric (Xydeas-Petrovic Q_G)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .information import _check


class DegenerateInputError(ValueError):
    pass


@dataclass(frozen=True)
class QgParams:
    gamma_g: float = 0.9994
    k_g: float = -15.0
    sigma_g: float = 0.5
    gamma_a: float = 0.9879
    k_a: float = -22.0
    sigma_a: float = 0.8
    L: float = 1.0
    # evaluate the orientation sigmoid on the strength ratio, as literally printed
    literal_orientation_sigmoid: bool = False

    def __post_init__(self):
        if not (0 < self.gamma_g <= 1 and 0 < self.gamma_a <= 1):
            raise ValueError("sigmoid gains must lie in (0, 1]")

    def perfect_score(self) -> float:
        """Q^AF at perfect preservation (G = 1, Delta = 1)."""
        qg = self.gamma_g / (1 + np.exp(self.k_g * (1 - self.sigma_g)))
        qa = self.gamma_a / (1 + np.exp(self.k_a * (1 - self.sigma_a)))
        return float(qg * qa)


def sobel(img: np.ndarray):
    """Return (strength, orientation) from 3x3 Sobel responses with replicate borders.

    Orientation is atan(Sx / Sy) in (-pi/2, pi/2]; a zero vertical response maps
    to +-pi/2 and a zero gradient to 0.
    """
    sx = ndimage.sobel(img, axis=1, mode="nearest")
    sy = ndimage.sobel(img, axis=0, mode="nearest")
    g = np.hypot(sx, sy)
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha = np.arctan(sx / sy)
    alpha = np.where(sy == 0, np.where(sx == 0, 0.0, np.sign(sx) * np.pi / 2), alpha)
    return g, alpha


def edge_preservation(gA, aA, gF, aF, p: QgParams) -> np.ndarray:
    """Per-pixel Q^XF = Q_g * Q_alpha."""
    both_zero = (gA == 0) & (gF == 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        G = np.where(gA > gF, gF / gA, gA / gF)
    G = np.where(both_zero, 1.0, G)
    D = 1.0 - np.abs(aA - aF) / (np.pi / 2)
    D = np.where(both_zero, 1.0, D)
    qg = p.gamma_g / (1 + np.exp(p.k_g * (G - p.sigma_g)))
    arg = G if p.literal_orientation_sigmoid else D
    qa = p.gamma_a / (1 + np.exp(p.k_a * (arg - p.sigma_a)))
    return qg * qa


def q_g(A, B, F, p: QgParams | None = None) -> float:
    """Edge-strength weighted average of edge preservation from A and B into F."""
    p = p or QgParams()
    A, B, F = _check(A, B, F)
    gA, aA = sobel(A)
    gB, aB = sobel(B)
    gF, aF = sobel(F)
    wA = gA ** p.L
    wB = gB ** p.L
    denom = float(np.sum(wA + wB))
    if denom == 0:
        raise DegenerateInputError("both source images have zero gradient everywhere")
    num = np.sum(edge_preservation(gA, aA, gF, aF, p) * wA + edge_preservation(gB, aB, gF, aF, p) * wB)
    return float(num / denom)
