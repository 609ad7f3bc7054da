import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from viewsynth.metrics import (
    MetricDomainError,
    WidthTooSmallError,
    blend_cuts,
    evaluate_depth,
    postprocess_flip_blend,
)


def loop_metrics(pred, gt, valid):
    n = 0
    s_abs = s_sq = s_se = s_log = 0.0
    d = [0, 0, 0]
    for i in range(gt.shape[0]):
        for j in range(gt.shape[1]):
            if not valid[i, j]:
                continue
            p, g = float(pred[i, j]), float(gt[i, j])
            n += 1
            s_abs += abs(p - g) / g
            s_sq += (p - g) ** 2 / g
            s_se += (p - g) ** 2
            s_log += (math.log(p) - math.log(g)) ** 2
            ratio = max(p / g, g / p)
            for k in range(3):
                d[k] += ratio < 1.25 ** (k + 1)
    return [s_abs / n, s_sq / n, math.sqrt(s_se / n), math.sqrt(s_log / n)] + [x / n for x in d]


def as_list(m):
    return [m.abs_rel, m.sq_rel, m.rmse, m.rmse_log, m.delta1, m.delta2, m.delta3]


def test_perfect_prediction():
    gt = np.linspace(1, 20, 30).reshape(5, 6)
    assert as_list(evaluate_depth(gt, gt)) == [0, 0, 0, 0, 1, 1, 1]


def test_ratio_boundary_is_strict():
    gt = np.linspace(1, 20, 30).reshape(5, 6)
    m = evaluate_depth(1.25 * gt, gt)
    assert m.abs_rel == pytest.approx(0.25, abs=1e-15)
    assert (m.delta1, m.delta2, m.delta3) == (0.0, 1.0, 1.0)


def test_matches_loop_oracle(rng):
    pred = rng.uniform(0.5, 30, (16, 16))
    gt = rng.uniform(0.5, 30, (16, 16))
    valid = rng.uniform(size=(16, 16)) > 0.2
    assert_allclose(as_list(evaluate_depth(pred, gt, valid)), loop_metrics(pred, gt, valid), rtol=0, atol=1e-12)


def test_delta_ordering_and_ranges(rng):
    for _ in range(100):
        pred = rng.uniform(0.1, 50, (8, 8))
        gt = rng.uniform(0.1, 50, (8, 8))
        m = evaluate_depth(pred, gt)
        assert 0 <= m.delta1 <= m.delta2 <= m.delta3 <= 1
        assert min(m.abs_rel, m.sq_rel, m.rmse, m.rmse_log) >= 0


def test_delta_symmetric_errors_not(rng):
    pred = rng.uniform(1, 10, (8, 8))
    gt = rng.uniform(1, 10, (8, 8))
    a, b = evaluate_depth(pred, gt), evaluate_depth(gt, pred)
    assert (a.delta1, a.delta2, a.delta3) == (b.delta1, b.delta2, b.delta3)
    assert a.rmse == pytest.approx(b.rmse)
    assert a.abs_rel != pytest.approx(b.abs_rel)


@settings(max_examples=30)
@given(st.floats(0.01, 100), st.integers(0, 2**31 - 1))
def test_median_scaling_removes_global_scale(c, seed):
    rng = np.random.default_rng(seed)
    pred = rng.uniform(1, 10, (6, 6))
    gt = rng.uniform(1, 10, (6, 6))
    a = evaluate_depth(pred, gt, median_scale=True)
    b = evaluate_depth(c * pred, gt, median_scale=True)
    assert b.abs_rel == pytest.approx(a.abs_rel, rel=1e-9)


def test_depth_cap():
    gt = np.full((2, 2), 100.0)
    assert evaluate_depth(np.full((2, 2), 120.0), gt, depth_cap=80.0).abs_rel == 0.0


def test_domain_errors():
    gt = np.ones((3, 3))
    with pytest.raises(MetricDomainError):
        evaluate_depth(np.zeros((3, 3)), gt)
    with pytest.raises(MetricDomainError):
        evaluate_depth(gt, gt, np.zeros((3, 3), bool))
    # Non-positive predictions outside the valid region are ignored.
    pred = gt.copy()
    pred[0, 0] = -1
    valid = np.ones((3, 3), bool)
    valid[0, 0] = False
    assert evaluate_depth(pred, gt, valid).abs_rel == 0.0


def test_text_block():
    text = evaluate_depth(np.ones((2, 2)), np.ones((2, 2))).to_text()
    assert text.splitlines()[0] == "abs_rel = 0.0"
    assert len(text.splitlines()) == 7


class TestFlipBlend:
    def test_identical_inputs(self, rng):
        d = rng.uniform(0, 5, (4, 40))
        assert_array_equal(postprocess_flip_blend(d, d), d)

    def test_piecewise_definition(self):
        out = postprocess_flip_blend(np.full((3, 100), 2.0), np.full((3, 100), 4.0))
        assert_array_equal(out[:, :5], 2.0)
        assert_array_equal(out[:, 95:], 4.0)
        assert_array_equal(out[:, 5:95], 3.0)

    def test_mirror_symmetric_field_is_fixed(self, rng):
        half = rng.uniform(0, 5, (4, 25))
        d = np.hstack([half, half[:, ::-1]])
        assert_array_equal(postprocess_flip_blend(d, d[:, ::-1]), d)

    def test_cut_indices(self):
        assert blend_cuts(20) == (1, 19)
        assert blend_cuts(39) == (1, 38)
        assert blend_cuts(128) == (6, 122)

    def test_too_narrow(self):
        with pytest.raises(WidthTooSmallError):
            postprocess_flip_blend(np.zeros((2, 19)), np.zeros((2, 19)))

    @settings(max_examples=30)
    @given(st.integers(0, 2**31 - 1))
    def test_within_input_range(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.uniform(-3, 3, (2, 3, 30))
        out = postprocess_flip_blend(a, b)
        assert np.all(out >= np.minimum(a, b)) and np.all(out <= np.maximum(a, b))
