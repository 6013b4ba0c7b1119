"""Depth-of-field arithmetic and DoF-constrained graph segmentation of depth maps.

The segmentation is Felzenszwalb-Huttenlocher merging on a 4-connected grid
whose edge weights are absolute depth differences (mm).  On top of the usual
internal-difference predicate, two components may only merge when their
combined depth span fits inside one depth of field of the color camera::

    (max - min) < max(back_dof(min), front_dof(max))

The union-find carries per-component min/max depth so this check is O(1) per
candidate edge.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numba
import numpy as np

from .imgcore import OpticsConfig, as_depth_map, write_raster


class HyperfocalError(ValueError):
    """Focus distance lies at or beyond the hyperfocal distance; back DoF is unbounded."""


def _k(o: OpticsConfig) -> float:
    return o.f_number * o.coc_diameter


def back_dof(u: float, o: OpticsConfig) -> float:
    """Depth range behind the focus distance ``u`` that stays acceptably sharp."""
    k = _k(o)
    denom = o.focal_length ** 2 - k * u
    if denom <= 0:
        raise HyperfocalError(f"u={u} mm is beyond the hyperfocal distance {o.focal_length ** 2 / k:.0f} mm")
    return k * u * u / denom


def front_dof(u: float, o: OpticsConfig) -> float:
    """Depth range in front of the focus distance ``u`` that stays acceptably sharp."""
    if u <= 0:
        raise ValueError("focus distance must be positive")
    k = _k(o)
    return k * u * u / (o.focal_length ** 2 + k * u)


def max_dof(min_depth: float, max_depth: float, o: OpticsConfig) -> float:
    """Larger of back DoF at ``min_depth`` and front DoF at ``max_depth``; inf past hyperfocal."""
    try:
        b = back_dof(min_depth, o)
    except HyperfocalError:
        return math.inf
    return max(b, front_dof(max_depth, o))


def dof_rule(min_depth: float, max_depth: float, o: OpticsConfig) -> bool:
    if min_depth > max_depth:
        raise ValueError("min_depth must not exceed max_depth")
    return (max_depth - min_depth) < max_dof(min_depth, max_depth, o)


@dataclass(frozen=True)
class SegParams:
    felz_k: float = 100.0
    min_region_px: int = 100
    connectivity: int = 4

    def __post_init__(self):
        if not self.felz_k > 0:
            raise ValueError("felz_k must be positive")
        if self.min_region_px < 1:
            raise ValueError("min_region_px must be >= 1")
        if self.connectivity != 4:
            raise ValueError("only 4-connectivity is supported")


@dataclass
class SegmentationMap:
    labels: np.ndarray  # int32 (H, W), dense in [0, region_count)
    region_count: int

    @property
    def shape(self):
        return self.labels.shape


@dataclass(frozen=True)
class RegionStats:
    id: int
    pixel_count: int
    min_depth: int
    max_depth: int
    diff: int
    max_dof: float
    dof_ok: bool


# --------------------------------------------------------------------------
# compiled kernels
# --------------------------------------------------------------------------

# Union-find state is packed per node for cache locality:
#   node[x] = (parent, size, first pixel)   int32
#   st[x]   = (min, max, sum, threshold) float64, valid at roots only

@numba.njit(cache=True, inline="always")
def _find(node, x):
    root = x
    while node[root, 0] != root:
        root = node[root, 0]
    while node[x, 0] != root:
        nxt = node[x, 0]
        node[x, 0] = root
        x = nxt
    return root


@numba.njit(cache=True, inline="always")
def _dof_ok(lo, hi, fsq, k):
    diff = hi - lo
    denom = fsq - k * lo
    if denom <= 0.0:
        return True
    b = k * lo * lo / denom
    f = k * hi * hi / (fsq + k * hi)
    return diff < max(b, f)


@numba.njit(cache=True, inline="always")
def _union(node, st, a, b):
    """Union by size; the larger component (lower id on ties) stays root."""
    if node[a, 1] < node[b, 1] or (node[a, 1] == node[b, 1] and b < a):
        a, b = b, a
    node[b, 0] = a
    node[a, 1] += node[b, 1]
    node[a, 2] = min(node[a, 2], node[b, 2])
    st[a, 0] = min(st[a, 0], st[b, 0])
    st[a, 1] = max(st[a, 1], st[b, 1])
    st[a, 2] += st[b, 2]
    return a


@numba.njit(cache=True, inline="always")
def _edge_ends(code, width):
    p = code >> 1
    return p, (p + width if code & 1 else p + 1)


@numba.njit(cache=True)
def _segment_kernel(depth, codes, width, felz_k, min_size, fsq, k):
    n = depth.size
    ne = codes.size
    node = np.empty((n, 3), np.int32)
    st = np.empty((n, 4))
    for p in range(n):
        node[p, 0] = p
        node[p, 1] = 1
        node[p, 2] = p
        st[p, 0] = depth[p]
        st[p, 1] = depth[p]
        st[p, 2] = depth[p]
        st[p, 3] = felz_k

    for e in range(ne):
        p, q = _edge_ends(codes[e], width)
        a = _find(node, p)
        b = _find(node, q)
        if a == b:
            continue
        we = abs(np.int64(depth[q]) - np.int64(depth[p]))
        if we <= st[a, 3] and we <= st[b, 3]:
            if _dof_ok(min(st[a, 0], st[b, 0]), max(st[a, 1], st[b, 1]), fsq, k):
                r = _union(node, st, a, b)
                st[r, 3] = we + felz_k / node[r, 1]

    # absorb small components into the neighbour with the closest mean depth;
    # only edges between distinct components can matter from here on.  Ties
    # and processing order use each component's first pixel, so the result
    # depends only on the partition, not on which node happens to be root.
    if min_size > 1:
        bsrc = np.empty(ne, np.int32)
        bdst = np.empty(ne, np.int32)
        m = 0
        for e in range(ne):
            p, q = _edge_ends(codes[e], width)
            if _find(node, p) != _find(node, q):
                bsrc[m] = p
                bdst[m] = q
                m += 1
        best = np.full(n, -1)
        best_gap = np.full(n, np.inf)
        cands = np.empty(n, np.int64)
        while True:
            nc = 0
            any_small = False
            for e in range(m):
                a = _find(node, bsrc[e])
                b = _find(node, bdst[e])
                if a == b:
                    continue
                gap = abs(st[a, 2] / node[a, 1] - st[b, 2] / node[b, 1])
                if node[a, 1] < min_size:
                    any_small = True
                    if best[a] < 0:
                        cands[nc] = a
                        nc += 1
                    if gap < best_gap[a] or (gap == best_gap[a] and node[b, 2] < node[best[a], 2]):
                        best_gap[a] = gap
                        best[a] = b
                if node[b, 1] < min_size:
                    any_small = True
                    if best[b] < 0:
                        cands[nc] = b
                        nc += 1
                    if gap < best_gap[b] or (gap == best_gap[b] and node[a, 2] < node[best[b], 2]):
                        best_gap[b] = gap
                        best[b] = a
            if not any_small:
                break
            merged = False
            keys = np.empty(nc, np.int64)
            for i in range(nc):
                keys[i] = node[cands[i], 2]
            for i in np.argsort(keys):
                r = cands[i]
                cand = best[r]
                best[r] = -1
                best_gap[r] = np.inf
                a = _find(node, r)
                b = _find(node, cand)
                if a == b or node[a, 1] >= min_size:
                    continue
                if _dof_ok(min(st[a, 0], st[b, 0]), max(st[a, 1], st[b, 1]), fsq, k):
                    _union(node, st, a, b)
                    merged = True
            if not merged:
                break

    labels = np.empty(n, np.int32)
    remap = np.full(n, -1, np.int32)
    count = 0
    for p in range(n):
        r = _find(node, p)
        if remap[r] < 0:
            remap[r] = count
            count += 1
        labels[p] = remap[r]
    return labels, count


@numba.njit(cache=True)
def _sorted_edge_codes(d):
    """Edge codes ``2p`` (p to its right neighbour) and ``2p + 1`` (p to the pixel
    below), stably counting-sorted by absolute depth difference."""
    h, w = d.shape
    m = h * (w - 1) + (h - 1) * w
    count = np.zeros(65537, np.int64)
    for y in range(h):
        for x in range(w):
            if x + 1 < w:
                count[abs(np.int64(d[y, x + 1]) - np.int64(d[y, x])) + 1] += 1
            if y + 1 < h:
                count[abs(np.int64(d[y + 1, x]) - np.int64(d[y, x])) + 1] += 1
    for v in range(1, 65537):
        count[v] += count[v - 1]
    codes = np.empty(m, np.int32)
    # raster order with the right edge first is already (source, target) order
    for y in range(h):
        for x in range(w):
            p = y * w + x
            if x + 1 < w:
                wt = abs(np.int64(d[y, x + 1]) - np.int64(d[y, x]))
                codes[count[wt]] = 2 * p
                count[wt] += 1
            if y + 1 < h:
                wt = abs(np.int64(d[y + 1, x]) - np.int64(d[y, x]))
                codes[count[wt]] = 2 * p + 1
                count[wt] += 1
    return codes


def grid_edges(depth: np.ndarray):
    """4-connected edges ``(src, dst, weight)`` sorted by (weight, source, target)."""
    depth = as_depth_map(depth)
    codes = _sorted_edge_codes(depth).astype(np.int64)
    src = codes >> 1
    dst = np.where(codes & 1, src + depth.shape[1], src + 1)
    flat = depth.ravel().astype(np.int64)
    return src, dst, np.abs(flat[dst] - flat[src])


def segment_depth(depth, optics: OpticsConfig, params: SegParams | None = None) -> SegmentationMap:
    """Segment a hole-free depth map into DoF-consistent, 4-connected regions."""
    params = params or SegParams()
    depth = as_depth_map(depth)
    if np.any(depth == 0):
        raise ValueError("depth map still contains invalid (zero) pixels; preprocess it first")
    if depth.size >= 1 << 30:
        raise ValueError("depth map too large to segment")
    labels, count = _segment_kernel(
        depth.ravel(), _sorted_edge_codes(depth), depth.shape[1],
        float(params.felz_k), int(params.min_region_px),
        float(optics.focal_length ** 2), float(_k(optics)),
    )
    return SegmentationMap(labels.reshape(depth.shape), int(count))


def region_stats(seg: SegmentationMap, depth, optics: OpticsConfig) -> list[RegionStats]:
    depth = as_depth_map(depth)
    if seg.labels.shape != depth.shape:
        raise ValueError(f"segmentation {seg.labels.shape} and depth {depth.shape} differ in size")
    lab = seg.labels.ravel()
    d = depth.ravel()
    n = seg.region_count
    counts = np.bincount(lab, minlength=n)
    mins = np.full(n, np.iinfo(np.int64).max)
    maxs = np.zeros(n, np.int64)
    np.minimum.at(mins, lab, d)
    np.maximum.at(maxs, lab, d)
    out = []
    for r in range(n):
        lo, hi = int(mins[r]), int(maxs[r])
        md = max_dof(lo, hi, optics)
        out.append(RegionStats(r, int(counts[r]), lo, hi, hi - lo, md, (hi - lo) < md))
    return out


def save_segmentation(seg: SegmentationMap, stats: list[RegionStats], pgm_path, json_path) -> None:
    if seg.region_count > 65535:
        raise ValueError("too many regions for a 16-bit label map")
    write_raster(pgm_path, seg.labels.astype(np.uint16))
    records = []
    for s in stats:
        rec = asdict(s)
        rec["max_dof"] = None if math.isinf(s.max_dof) else s.max_dof
        records.append(rec)
    Path(json_path).write_text(json.dumps({"region_count": seg.region_count, "regions": records}, indent=2))
