"""Information-theoretic fusion metrics: normalized MI and NCIE."""

from __future__ import annotations

import math

import numpy as np

BINS = 256


def _check(*imgs) -> list[np.ndarray]:
    arrs = [np.asarray(x, dtype=np.float64) for x in imgs]
    shape = arrs[0].shape
    if any(a.shape != shape for a in arrs) or len(shape) != 2:
        raise ValueError("metric inputs must be 2-D gray images of equal size")
    return arrs


def quantize(img: np.ndarray) -> np.ndarray:
    """Map intensities to histogram bins 0..255 (round to nearest, clip)."""
    return np.clip(np.rint(img), 0, BINS - 1).astype(np.intp)


def joint_histogram(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Normalized 256x256 joint histogram of two quantized images."""
    idx = quantize(x).ravel() * BINS + quantize(y).ravel()
    h = np.bincount(idx, minlength=BINS * BINS).astype(np.float64)
    return (h / h.sum()).reshape(BINS, BINS)


def _entropy(p: np.ndarray, base: float) -> float:
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)) / math.log(base))


def entropies(x, y, base: float = 2.0):
    """Return (H(X), H(Y), H(X,Y)) in the given logarithm base."""
    pxy = joint_histogram(x, y)
    return _entropy(pxy.sum(axis=1), base), _entropy(pxy.sum(axis=0), base), _entropy(pxy, base)


def mutual_information(x, y) -> float:
    hx, hy, hxy = entropies(x, y)
    return hx + hy - hxy


def q_mi(A, B, F) -> float:
    """Normalized mutual information, 2 * [MI(A,F)/(H(A)+H(F)) + MI(B,F)/(H(B)+H(F))]."""
    A, B, F = _check(A, B, F)
    total = 0.0
    for X in (A, B):
        hx, hf, hxf = entropies(X, F)
        denom = hx + hf
        if denom == 0:
            # both constant: treat as identical images (normalized term = 1)
            total += 0.5
        else:
            total += (hx + hf - hxf) / denom
    return 2.0 * total


def ncc(x, y) -> float:
    """Nonlinear correlation coefficient with base-256 entropies."""
    hx, hy, hxy = entropies(x, y, base=BINS)
    return hx + hy - hxy


def sym3_eigenvalues(R: np.ndarray) -> np.ndarray:
    """Eigenvalues of a real symmetric 3x3 matrix via the trigonometric cubic solution."""
    a, b, c = R[0, 0], R[1, 1], R[2, 2]
    d, e, f = R[0, 1], R[1, 2], R[0, 2]
    p1 = d * d + e * e + f * f
    q = (a + b + c) / 3.0
    if p1 == 0.0:
        return np.sort(np.array([a, b, c]))[::-1]
    p2 = (a - q) ** 2 + (b - q) ** 2 + (c - q) ** 2 + 2.0 * p1
    p = math.sqrt(p2 / 6.0)
    Bm = (R - q * np.eye(3)) / p
    with np.errstate(divide="ignore", invalid="ignore"):  # singular Bm is fine
        r = np.linalg.det(Bm) / 2.0
    r = min(1.0, max(-1.0, r))
    phi = math.acos(r) / 3.0
    e1 = q + 2.0 * p * math.cos(phi)
    e3 = q + 2.0 * p * math.cos(phi + 2.0 * math.pi / 3.0)
    e2 = 3.0 * q - e1 - e3
    return np.array([_polish(R, v) for v in (e1, e2, e3)])


def _polish(R: np.ndarray, lam: float) -> float:
    """Rayleigh-quotient refinement of one cubic root.

    The cubic is only sqrt(eps)-accurate for small or clustered roots; an
    eigenvector from the cross product of two rows of R - lam*I restores full
    precision.  Near-double roots give no usable cross product and are kept.
    """
    A = R - lam * np.eye(3)
    v = max((np.cross(A[0], A[1]), np.cross(A[0], A[2]), np.cross(A[1], A[2])), key=lambda c: c @ c)
    n = float(v @ v)
    return float(v @ R @ v / n) if n > 1e-20 else lam


def ncie_from_matrix(R: np.ndarray) -> float:
    lam = sym3_eigenvalues(R)
    total = 0.0
    for v in lam:
        t = v / 3.0
        if t > 0:
            total += t * math.log(t) / math.log(BINS)
    return 1.0 + total


def q_ncie(A, B, F) -> float:
    """Nonlinear correlation information entropy of the (A, B, F) triple."""
    A, B, F = _check(A, B, F)
    ab, af, bf = ncc(A, B), ncc(A, F), ncc(B, F)
    R = np.array([[1.0, ab, af], [ab, 1.0, bf], [af, bf, 1.0]])
    return ncie_from_matrix(R)
