"""Yang's SSIM-based fusion metric Q_Y."""

from __future__ import annotations

import numpy as np

from .information import _check

WINDOW = 7
DYNAMIC_RANGE = 255.0
C1 = (0.01 * DYNAMIC_RANGE) ** 2
C2 = (0.03 * DYNAMIC_RANGE) ** 2


def _window_means(x: np.ndarray, win: int) -> np.ndarray:
    """Mean over every fully contained win x win window (valid positions only)."""
    c = np.cumsum(np.cumsum(np.pad(x, ((1, 0), (1, 0))), axis=0), axis=1)
    s = c[win:, win:] - c[:-win, win:] - c[win:, :-win] + c[:-win, :-win]
    return s / (win * win)


def local_stats(x: np.ndarray, y: np.ndarray, win: int = WINDOW):
    """Per-window (mu_x, mu_y, var_x, var_y, cov_xy), population moments."""
    mx = _window_means(x, win)
    my = _window_means(y, win)
    vx = _window_means(x * x, win) - mx * mx
    vy = _window_means(y * y, win) - my * my
    cxy = _window_means(x * y, win) - mx * my
    return mx, my, vx, vy, cxy


def ssim_map(x: np.ndarray, y: np.ndarray, win: int = WINDOW):
    mx, my, vx, vy, cxy = local_stats(x, y, win)
    s = ((2 * mx * my + C1) * (2 * cxy + C2)) / ((mx ** 2 + my ** 2 + C1) * (vx + vy + C2))
    return s, vx, vy


def q_y(A, B, F, win: int = WINDOW) -> float:
    """Mean over windows of the Yang combination of SSIM(A,F) and SSIM(B,F)."""
    A, B, F = _check(A, B, F)
    if min(A.shape) < win:
        raise ValueError(f"Q_Y needs images of at least {win}x{win} pixels")
    s_ab, va, vb = ssim_map(A, B, win)
    s_af, _, _ = ssim_map(A, F, win)
    s_bf, _, _ = ssim_map(B, F, win)
    tot = va + vb
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = np.where(tot == 0, 0.5, va / tot)
    q = np.where(s_ab >= 0.75, lam * s_af + (1 - lam) * s_bf, np.maximum(s_af, s_bf))
    return float(q.mean())
