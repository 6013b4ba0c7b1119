import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import ndimage

from depthfuse.dofseg import SegmentationMap, segment_depth
from depthfuse.fusion import (blend, focus_measure, fuse, laplacian, region_focus_scores,
                              select_in_focus, weight_map)
from depthfuse.imgcore import OpticsConfig, to_gray
from depthfuse.simulate import Layer, SceneSpec, render_stack


def _texture(seed, shape=(40, 50)):
    return np.random.default_rng(seed).uniform(0, 255, shape)


def test_laplacian_kernel():
    g = np.zeros((5, 5))
    g[2, 2] = 1.0
    lap = laplacian(g)
    assert lap[2, 2] == -4 and lap[1, 2] == lap[3, 2] == lap[2, 1] == lap[2, 3] == 1
    assert lap[1, 1] == 0
    ref = ndimage.convolve(_texture(1), [[0, 1, 0], [1, -4, 1], [0, 1, 0]], mode="nearest")
    np.testing.assert_allclose(laplacian(_texture(1)), ref, atol=1e-9)


def test_focus_constant_is_zero():
    assert focus_measure(np.full((10, 10), 77.0), np.ones((10, 10), bool)) == 0.0


def test_focus_sharp_beats_blurred():
    t = _texture(2)
    mask = np.ones(t.shape, bool)
    assert focus_measure(t, mask) > focus_measure(ndimage.gaussian_filter(t, 2), mask)


@given(st.floats(-100, 100))
@settings(max_examples=20, deadline=None)
def test_focus_offset_invariant(c):
    t = _texture(3)
    mask = np.zeros(t.shape, bool)
    mask[5:30, 5:40] = True
    assert focus_measure(t + c, mask) == pytest.approx(focus_measure(t, mask), rel=1e-9)


def test_focus_uses_interior_only():
    t = np.zeros((20, 20))
    t[:, 10:] = 200.0  # a step just outside the mask's interior
    mask = np.zeros(t.shape, bool)
    mask[:, :10] = True
    assert focus_measure(t, mask) == 0.0


def test_focus_thin_region_falls_back_to_mask():
    t = _texture(4, (5, 5))
    mask = np.zeros((5, 5), bool)
    mask[2, :] = True
    lap = laplacian(t)
    assert focus_measure(t, mask) == pytest.approx(np.mean(lap[2, :] ** 2))


def test_focus_empty_mask():
    with pytest.raises(ValueError):
        focus_measure(np.zeros((3, 3)), np.zeros((3, 3), bool))


def test_region_scores_match_focus_measure():
    rng = np.random.default_rng(5)
    d = np.full((30, 40), 2500, np.uint16)
    d[5:20, 10:25] = 900
    d[25:, :] = 1400
    d[27, 3] = 1401
    seg = segment_depth(d, OpticsConfig())
    seg = SegmentationMap(seg.labels, seg.region_count)
    stack = [rng.integers(0, 256, (30, 40, 3)).astype(np.uint8) for _ in range(3)]
    scores = region_focus_scores(stack, seg)
    for i, img in enumerate(stack):
        for r in range(seg.region_count):
            assert scores[i, r] == pytest.approx(focus_measure(to_gray(img), seg.labels == r), rel=1e-12)


def _two_layer_stack():
    spec = SceneSpec(layers=[Layer(2417.0, None, 11), Layer(855.0, (10, 10, 50, 40), 12)],
                     width=64, height=48, focus_depths=[2417.0, 855.0])
    stack, truth, depth = render_stack(spec)
    return stack, truth, depth


def test_select_recovers_focus_source():
    stack, truth, depth = _two_layer_stack()
    seg = segment_depth(depth, OpticsConfig())
    labels = select_in_focus(stack, seg)
    assert (labels[depth == 2417] == 0).all()
    assert (labels[depth == 855] == 1).all()
    np.testing.assert_array_equal(fuse(stack, labels), truth)


def test_select_single_region_and_ties():
    img = np.random.default_rng(6).integers(0, 256, (12, 12, 3)).astype(np.uint8)
    seg = SegmentationMap(np.zeros((12, 12), np.int32), 1)
    assert (select_in_focus([img, img, img], seg) == 0).all()
    blurred = ndimage.gaussian_filter(img, (2, 2, 0))
    assert (select_in_focus([blurred, img], seg) == 1).all()


def test_select_dimension_mismatch():
    seg = SegmentationMap(np.zeros((4, 4), np.int32), 1)
    with pytest.raises(ValueError):
        select_in_focus([np.zeros((5, 5, 3), np.uint8)] * 2, seg)
    with pytest.raises(ValueError):
        select_in_focus([np.zeros((4, 4, 3), np.uint8)], seg)


def test_weight_map_front_region():
    labels = np.zeros((6, 6), np.uint8)
    labels[2:4, 2:4] = 1
    w = weight_map(labels, 1)
    assert w.dtype == np.float64
    assert (w[2:4, 2:4] == 1.0).all() and w.sum() == 4
    np.testing.assert_array_equal(weight_map(np.zeros((3, 3), np.uint8), 1), 0.0)
    np.testing.assert_array_equal(weight_map(labels, 0) + weight_map(labels, 1), 1.0)


def test_weight_map_requires_two_sources():
    with pytest.raises(ValueError):
        weight_map(np.zeros((2, 2)), 1, n_sources=3)


def test_blend_identities():
    rng = np.random.default_rng(7)
    a = rng.integers(0, 256, (8, 8, 3)).astype(np.uint8)
    b = rng.integers(0, 256, (8, 8, 3)).astype(np.uint8)
    np.testing.assert_array_equal(blend(a, b, np.zeros((8, 8))), a)
    np.testing.assert_array_equal(blend(a, b, np.ones((8, 8))), b)
    g100 = np.full((4, 4, 3), 100, np.uint8)
    g200 = np.full((4, 4, 3), 200, np.uint8)
    np.testing.assert_array_equal(blend(g100, g200, np.full((4, 4), 0.5)), 150)


def test_fuse_selects_source_pixels():
    rng = np.random.default_rng(8)
    stack = [rng.integers(0, 256, (10, 10, 3)).astype(np.uint8) for _ in range(4)]
    labels = rng.integers(0, 4, (10, 10)).astype(np.uint8)
    out = fuse(stack, labels)
    for y in range(10):
        for x in range(10):
            np.testing.assert_array_equal(out[y, x], stack[labels[y, x]][y, x])
    two = fuse(stack[:2], labels % 2)
    np.testing.assert_array_equal(two, np.where((labels % 2)[..., None] == 1, stack[1], stack[0]))


@given(st.integers(2, 5))
@settings(max_examples=5, deadline=None)
def test_fuse_idempotent(n):
    img = np.random.default_rng(n).integers(0, 256, (9, 7, 3)).astype(np.uint8)
    labels = np.random.default_rng(n + 1).integers(0, n, (9, 7))
    np.testing.assert_array_equal(fuse([img] * n, labels), img)


def test_fuse_errors():
    stack = [np.zeros((4, 4, 3), np.uint8)] * 2
    with pytest.raises(ValueError):
        fuse(stack, np.zeros((3, 4), np.uint8))
    with pytest.raises(ValueError):
        fuse(stack, np.full((4, 4), 2, np.uint8))
