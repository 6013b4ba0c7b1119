"""Per-region in-focus selection and all-in-focus compositing."""

from __future__ import annotations

import numba
import numpy as np

from .dofseg import SegmentationMap
from .imgcore import as_color_image, as_gray_image, to_gray


def laplacian(gray: np.ndarray) -> np.ndarray:
    """3x3 Laplacian [0 1 0; 1 -4 1; 0 1 0] with replicate borders."""
    p = np.pad(gray, 1, mode="edge")
    return p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:] - 4.0 * gray


def _interior(mask: np.ndarray) -> np.ndarray:
    """Pixels of ``mask`` whose 4-neighbours are all inside ``mask`` (1 px erosion)."""
    inner = mask.copy()
    inner[1:, :] &= mask[:-1, :]
    inner[:-1, :] &= mask[1:, :]
    inner[:, 1:] &= mask[:, :-1]
    inner[:, :-1] &= mask[:, 1:]
    return inner


def focus_measure(img, mask) -> float:
    """Mean squared Laplacian over the interior of ``mask``; larger means sharper.

    Falls back to the whole mask when the eroded interior is empty.
    """
    gray = as_gray_image(img)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != gray.shape:
        raise ValueError("mask and image differ in size")
    if not mask.any():
        raise ValueError("focus_measure needs a non-empty mask")
    inner = _interior(mask)
    if not inner.any():
        inner = mask
    lap = laplacian(gray)
    return float(np.mean(lap[inner] ** 2))


def _interior_labels(labels: np.ndarray) -> np.ndarray:
    """Boolean map of pixels whose 4-neighbours share their label."""
    same = np.ones(labels.shape, bool)
    same[1:, :] &= labels[1:, :] == labels[:-1, :]
    same[:-1, :] &= labels[:-1, :] == labels[1:, :]
    same[:, 1:] &= labels[:, 1:] == labels[:, :-1]
    same[:, :-1] &= labels[:, :-1] == labels[:, 1:]
    return same


@numba.njit(cache=True)
def _label_laplacian_energy(gray, labels, use, n):
    """Per-label sum of squared replicate-border Laplacian over ``use`` pixels."""
    h, w = gray.shape
    out = np.zeros(n)
    for y in range(h):
        ym = max(y - 1, 0)
        yp = min(y + 1, h - 1)
        for x in range(w):
            if not use[y, x]:
                continue
            xm = max(x - 1, 0)
            xp = min(x + 1, w - 1)
            c = gray[y, x]
            lap = gray[ym, x] + gray[yp, x] + gray[y, xm] + gray[y, xp] - 4.0 * c
            out[labels[y, x]] += lap * lap
    return out


def region_focus_scores(stack, seg: SegmentationMap) -> np.ndarray:
    """Array ``(n_sources, region_count)`` of focus_measure for every region/source pair."""
    labels = seg.labels
    n = seg.region_count
    inner = _interior_labels(labels)
    lab_in = labels[inner]
    count_in = np.bincount(lab_in, minlength=n)
    empty = count_in == 0
    if empty.any():
        # regions too thin to have an interior are scored over all their pixels
        use = inner | empty[labels]
        count_use = np.bincount(labels[use], minlength=n)
    else:
        use, count_use = inner, count_in
    scores = np.empty((len(stack), n))
    for i, img in enumerate(stack):
        gray = np.ascontiguousarray(to_gray(img), dtype=np.float64)
        scores[i] = _label_laplacian_energy(gray, labels, use, n) / count_use
    return scores


def _check_stack(stack) -> list:
    stack = list(stack)
    if len(stack) < 2:
        raise ValueError("an image stack needs at least two sources")
    shape = np.asarray(stack[0]).shape
    for img in stack[1:]:
        if np.asarray(img).shape != shape:
            raise ValueError("all sources in a stack must share one geometry")
    return stack


def select_in_focus(stack, seg: SegmentationMap) -> np.ndarray:
    """Label map giving, per pixel, the index of the sharpest source for its region."""
    stack = _check_stack(stack)
    if np.asarray(stack[0]).shape[:2] != seg.labels.shape:
        raise ValueError("segmentation and stack differ in size")
    scores = region_focus_scores(stack, seg)
    # argmax returns the first maximum, i.e. the lowest source index on ties
    best = np.argmax(scores, axis=0).astype(np.uint8 if len(stack) <= 256 else np.int32)
    return best[seg.labels]


def weight_map(labels, source_index: int, n_sources: int = 2) -> np.ndarray:
    """Binary weight map: 1.0 where ``labels == source_index``, else 0.0."""
    if n_sources != 2:
        raise ValueError("weight maps are defined for two-source stacks only")
    if source_index not in (0, 1):
        raise ValueError("source_index must be 0 or 1")
    return (np.asarray(labels) == source_index).astype(np.float64)


def blend(a, b, weights) -> np.ndarray:
    """F = (1 - W) * A + W * B per channel, rounded to 8 bits."""
    a = as_color_image(a).astype(np.float64)
    b = as_color_image(b).astype(np.float64)
    W = np.asarray(weights, dtype=np.float64)
    if W.shape != a.shape[:2] or a.shape != b.shape:
        raise ValueError("sources and weight map differ in size")
    W = W[..., None]
    return np.clip(np.rint((1.0 - W) * a + W * b), 0, 255).astype(np.uint8)


def fuse(stack, labels) -> np.ndarray:
    """Compose the all-in-focus image from a label map of chosen sources."""
    stack = _check_stack(stack)
    labels = np.asarray(labels)
    if labels.shape != np.asarray(stack[0]).shape[:2]:
        raise ValueError("label map and stack differ in size")
    if labels.size and labels.max() >= len(stack):
        raise ValueError("label map refers to a source outside the stack")
    if len(stack) == 2:
        return blend(stack[0], stack[1], weight_map(labels, 1))
    cube = np.stack([as_color_image(s) for s in stack])
    return np.take_along_axis(cube, labels[None, :, :, None].astype(np.intp), axis=0)[0]
