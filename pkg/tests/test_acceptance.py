"""Acceptance criteria, one marked group per criterion.

The terminal summary prints one PASS/FAIL line per criterion (see conftest).
"""

import json
import re
from collections import deque
from pathlib import Path

import numpy as np
import pytest
from scipy import ndimage

from depthfuse import (ADParams, OpticsConfig, SegParams, ad_hole_fill, dilate_fill, dof_rule,
                       max_dof, segment_depth)
from depthfuse.cli import main, run_pipeline
from depthfuse.imgcore import to_gray
from depthfuse.metrics import METRIC_NAMES, QgParams, evaluate_all, q_cb, q_g, q_mi, q_ncie, q_p, q_y
from depthfuse.metrics.ranking import bundled_scores_path, rank_csv, read_score_csv
from depthfuse.simulate import (degrade_depth, ground_truth_labels, layer_texture,
                                random_two_layer_scene, render_stack)
from metric_oracles import oracle_q_mi, oracle_q_ncie
from seg_oracle import reference_segment

PUBLISHED = Path(__file__).resolve().parents[1] / "paper.md"
OPT = OpticsConfig()


# ---------------------------------------------------------------- criterion 1

def published_region_rows():
    rows = []
    for line in PUBLISHED.read_text().splitlines():
        m = re.match(r"\s*\d&(\d+)&(\d+)&(\d+)&(\d+)&(Yes|No)", line)
        if m:
            lo, hi, diff, maxdof = map(int, m.groups()[:4])
            rows.append((lo, hi, diff, maxdof, m.group(5) == "Yes"))
    return rows


@pytest.mark.criterion(1, "DoF table reproduction")
def test_c1_dof_tables():
    rows = published_region_rows()
    assert len(rows) == 8
    assert sorted(r[3] for r in rows) == sorted([1526, 1132, 207, 1186, 109, 136, 182, 257])
    for lo, hi, diff, maxdof, ok in rows:
        assert hi - lo == diff
        assert abs(max_dof(lo, hi, OPT) - maxdof) <= 1, (lo, hi)
        assert dof_rule(lo, hi, OPT) == ok, (lo, hi)


# ---------------------------------------------------------------- criterion 2

@pytest.mark.criterion(2, "Ranking reproduction")
def test_c2_ranking():
    t = rank_csv(bundled_scores_path())
    totals = dict(zip(t.methods, t.totals.tolist()))
    assert totals == {"Ours": 229, "DCNN": 197, "DSIFT": 180, "IM": 160, "GF": 125,
                      "NSCT-PCNN": 85, "DWT": 73, "NSCT": 31}
    assert [t.methods[i] for i in t.order()] == ["Ours", "DCNN", "DSIFT", "IM", "GF", "NSCT-PCNN",
                                                 "DWT", "NSCT"]


# ---------------------------------------------------------------- criterion 3

def random_depth_map(seed, h=480, w=640):
    """Layered scene: tilted background, 1-6 rectangles (some ramps), sensor jitter."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w]
    a, b = rng.uniform(600, 4800, 2)
    d = a + (b - a) * (xx / w if rng.random() < 0.5 else yy / h)
    for _ in range(rng.integers(1, 7)):
        x0, y0 = rng.integers(0, w - 20), rng.integers(0, h - 20)
        x1, y1 = x0 + rng.integers(10, w // 2), y0 + rng.integers(10, h // 2)
        lo = rng.uniform(550, 4500)
        hi = lo + (rng.uniform(0, 800) if rng.random() < 0.5 else 0)
        patch = np.linspace(lo, hi, w)[None, :].repeat(h, 0)
        d[y0:y1, x0:x1] = patch[y0:y1, x0:x1]
    d += rng.integers(-int(rng.integers(0, 15)), int(rng.integers(1, 15)), (h, w))
    return np.clip(np.rint(d), 500, 5000).astype(np.uint16)


@pytest.mark.criterion(3, "Segmentation DoF invariant")
def test_c3_dof_invariant_on_random_vga_maps():
    for seed in range(100):
        d = random_depth_map(seed)
        seg = segment_depth(d, OPT, SegParams())
        idx = np.arange(seg.region_count)
        lo = ndimage.minimum(d, seg.labels, idx)
        hi = ndimage.maximum(d, seg.labels, idx)
        for r in range(seg.region_count):
            assert hi[r] - lo[r] < max_dof(lo[r], hi[r], OPT), (seed, r)


def small_map_corpus():
    rng = np.random.default_rng(2024)
    corpus = [np.full((1, 1), 1000, np.uint16), np.full((8, 8), 2500, np.uint16),
              np.tile(np.linspace(832, 1360, 8).astype(np.uint16), (8, 1)),
              np.where(np.arange(8)[None, :] < 4, 855, 2417).repeat(8, 0).astype(np.uint16)]
    for _ in range(196):
        h, w = rng.integers(1, 9, 2)
        planes = rng.integers(550, 4500, rng.integers(1, 4))
        noise = int(rng.integers(0, 80))
        d = planes[rng.integers(0, len(planes), (h, w))] + rng.integers(0, noise + 1, (h, w))
        corpus.append(d.astype(np.uint16))
    return corpus


def components_4(mask):
    """Number of 4-connected components of a boolean grid, by breadth-first search."""
    h, w = len(mask), len(mask[0])
    seen = [[False] * w for _ in range(h)]
    count = 0
    for y in range(h):
        for x in range(w):
            if not mask[y][x] or seen[y][x]:
                continue
            count += 1
            q = deque([(y, x)])
            seen[y][x] = True
            while q:
                cy, cx = q.popleft()
                for ny, nx in ((cy + 1, cx), (cy - 1, cx), (cy, cx + 1), (cy, cx - 1)):
                    if 0 <= ny < h and 0 <= nx < w and mask[ny][nx] and not seen[ny][nx]:
                        seen[ny][nx] = True
                        q.append((ny, nx))
    return count


@pytest.mark.criterion(3, "Segmentation DoF invariant")
@pytest.mark.parametrize("felz_k, min_size", [(100.0, 100), (100.0, 3), (20.0, 1), (1000.0, 5)])
def test_c3_small_maps_match_exhaustive_oracle(felz_k, min_size):
    for d in small_map_corpus():
        seg = segment_depth(d, OPT, SegParams(felz_k, min_size))
        ref_labels, ref_count = reference_segment(d, OPT, felz_k, min_size)
        assert seg.region_count == ref_count
        assert seg.labels.ravel().tolist() == list(ref_labels)
        lab = seg.labels.tolist()
        vals = d.tolist()
        for r in range(seg.region_count):
            mask = [[v == r for v in row] for row in lab]
            assert components_4(mask) == 1
            depths = [vals[y][x] for y in range(len(lab)) for x in range(len(lab[0])) if mask[y][x]]
            assert dof_rule(min(depths), max(depths), OPT)


# ---------------------------------------------------------------- criterion 4

def identity_images():
    shapes = [(64, 64), (48, 80), (57, 71), (96, 64), (40, 40), (33, 65), (80, 80), (64, 36), (50, 90), (72, 72)]
    return [to_gray(layer_texture(1000 + i, h, w)) for i, (h, w) in enumerate(shapes)]


@pytest.mark.criterion(4, "Metric identity suite")
def test_c4_identity_suite():
    perfect = QgParams().perfect_score()
    for X in identity_images():
        assert abs(q_mi(X, X, X) - 2) <= 1e-9
        assert abs(q_y(X, X, X) - 1) <= 1e-6
        assert abs(q_p(X, X, X) - 1) <= 1e-6
        assert abs(q_cb(X, X, X) - 1) <= 1e-3
        assert abs(q_g(X, X, X) - perfect) <= 1e-6


@pytest.mark.criterion(4, "Metric identity suite")
def test_c4_ncie_uniform_histogram():
    for seed in range(10):
        X = np.random.default_rng(seed).permutation(np.repeat(np.arange(256.0), 16)).reshape(64, 64)
        assert abs(q_ncie(X, X, X) - 1) <= 1e-6


# ---------------------------------------------------------------- criterion 5

def tiny_triples():
    rng = np.random.default_rng(5)
    shapes = [(1, 1), (1, 2), (2, 1), (1, 3), (3, 1), (1, 4), (4, 1), (2, 2)]
    out = [tuple(np.array(v, float).reshape(2, 2) for v in
                 ([0, 0, 255, 255], [0, 0, 255, 255], [0, 255, 0, 255]))]
    for i in range(400):
        h, w = shapes[i % len(shapes)]
        levels = rng.integers(0, 256, 3) if i % 2 else np.arange(256)
        out.append(tuple(rng.choice(levels, (h, w)).astype(float) for _ in range(3)))
    return out


@pytest.mark.criterion(5, "Small-instance oracle equivalence")
def test_c5_histogram_metrics_match_enumeration():
    for A, B, F in tiny_triples():
        a, b, f = A.ravel(), B.ravel(), F.ravel()
        assert abs(q_mi(A, B, F) - oracle_q_mi(a, b, f)) <= 1e-12
        assert abs(q_ncie(A, B, F) - oracle_q_ncie(a, b, f)) <= 1e-12


@pytest.mark.criterion(5, "Small-instance oracle equivalence")
def test_c5_dilate_fill_fixture():
    d = np.array([[0, 0, 0, 0, 0],
                  [0, 900, 0, 0, 0],
                  [0, 0, 0, 0, 1200],
                  [0, 0, 0, 0, 0],
                  [700, 0, 0, 0, 0]], np.uint16)
    # each hole takes the maximum of its 3x3 neighbourhood in the input
    expect = np.array([[900, 900, 900, 0, 0],
                       [900, 900, 900, 1200, 1200],
                       [900, 900, 900, 1200, 1200],
                       [700, 700, 0, 1200, 1200],
                       [700, 700, 0, 0, 0]], np.uint16)
    assert np.array_equal(dilate_fill(d), expect)


@pytest.mark.criterion(5, "Small-instance oracle equivalence")
@pytest.mark.parametrize("nbrs, expect", [
    # reference pixel 1000; neighbours (left, right, up, down); lambda 0.25, K 30
    ((1000, 1004, 998, 1002), 1001),   # 1000 + 0.25 * 3.92949 = 1000.98237
    ((990, 1012, 1000, 1030), 1003),   # 1000 + 0.25 * 12.31373 = 1003.07843
    ((1000, 1000, 1000, 1000), 1000),
])
def test_c5_ad_hole_fill_fixture(nbrs, expect):
    left, right, up, down = nbrs
    d = np.full((5, 5), 1000, np.uint16)
    d[2, 0], d[2, 2], d[1, 1], d[3, 1] = left, right, up, down
    d[2, 3] = 0
    out = ad_hole_fill(d, ADParams(0.25, 30.0))
    assert out[2, 3] == expect
    d[2, 3] = expect
    assert np.array_equal(out, d)


# ---------------------------------------------------------------- criterion 6

def boundary_band(labels, width=2):
    edge = np.zeros(labels.shape, bool)
    edge[:, 1:] |= labels[:, 1:] != labels[:, :-1]
    edge[:, :-1] |= labels[:, 1:] != labels[:, :-1]
    edge[1:, :] |= labels[1:, :] != labels[:-1, :]
    edge[:-1, :] |= labels[1:, :] != labels[:-1, :]
    return ndimage.binary_dilation(edge, iterations=width)


def psnr(a, b, mask):
    err = (a.astype(float) - b.astype(float))[mask]
    mse = float(np.mean(err ** 2))
    return np.inf if mse == 0 else 10 * np.log10(255.0 ** 2 / mse)


@pytest.fixture(scope="module")
def pipeline_results():
    out = []
    for seed in range(20):
        spec = random_two_layer_scene(seed)
        stack, truth, depth = render_stack(spec)
        calib = spec.calibration
        raw = degrade_depth(depth, spec.degradation, calib)
        res, _ = run_pipeline(raw, stack, calib, SegParams(), ADParams())
        out.append((spec, stack, truth, res["fused"]))
    return out


@pytest.mark.criterion(6, "End-to-end quality")
def test_c6_psnr_outside_boundary_band(pipeline_results):
    for spec, _, truth, fused in pipeline_results:
        keep = ~boundary_band(ground_truth_labels(spec))
        assert psnr(fused, truth, keep) >= 30.0, spec.degradation.seed


@pytest.mark.criterion(6, "End-to-end quality")
def test_c6_metrics_beat_average_blend(pipeline_results):
    wins = total = 0
    for _, stack, _, fused in pipeline_results:
        avg = np.rint((stack[0].astype(float) + stack[1].astype(float)) / 2).astype(np.uint8)
        ours = evaluate_all(stack[0], stack[1], fused)
        base = evaluate_all(stack[0], stack[1], avg)
        assert not ours.errors and not base.errors
        for name in METRIC_NAMES:
            total += 1
            wins += getattr(ours, name) > getattr(base, name)
    assert wins / total >= 0.9, f"{wins}/{total}"


# ---------------------------------------------------------------- criterion 7

@pytest.mark.criterion(7, "Runtime envelope")
def test_c7_bench_core_median(capsys):
    assert main(["bench", "--repetitions", "10", "--threads", "1"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert (res["width"], res["height"], res["sources"]) == (640, 480, 2)
    print(f"core median {res['median']['core_ms']:.1f} ms")
    assert res["median"]["core_ms"] <= 100.0


# ---------------------------------------------------------------- criterion 8

@pytest.mark.criterion(8, "Published absolute metric values (substituted by criteria 4-6)")
def test_c8_absolute_values_substituted(request):
    # The published values depend on captured scenes and external algorithms;
    # they ship only as ranking input. Check that role and that the
    # substitute criteria are part of this run.
    values, methods, _, metrics = read_score_csv(bundled_scores_path())
    assert values.shape == (5, 6, 8) and "Ours" in methods
    assert metrics == ["Q_MI", "Q_NCIE", "Q_G", "Q_P", "Q_Y", "Q_CB"]
    collected = {m.args[0] for item in request.session.items
                 for m in item.iter_markers("criterion")}
    assert {4, 5, 6} <= collected
