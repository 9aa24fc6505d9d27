import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridseg.metrics import (annotation_error, f1_score, hausdorff, mse_split, rand_index,
                               rand_index_pairs, segmentation_metrics)


def random_cps(rng, n):
    k = int(rng.integers(0, min(6, n - 1) + 1))
    return sorted(rng.choice(n - 1, k, replace=False).tolist())


def test_rand_identical():
    assert rand_index([3, 7], [3, 7], 12) == 1.0


def test_rand_hand_case():
    assert rand_index([], [1], 4) == pytest.approx(1 / 3)
    assert rand_index_pairs([], [1], 4) == pytest.approx(1 / 3)


def test_rand_matches_pair_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(2, 120))
        a, b = random_cps(rng, n), random_cps(rng, n)
        assert rand_index(a, b, n) == rand_index_pairs(a, b, n)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 80))
def test_rand_symmetric_and_bounded(seed, n):
    rng = np.random.default_rng(seed)
    a, b = random_cps(rng, n), random_cps(rng, n)
    r = rand_index(a, b, n)
    assert r == rand_index(b, a, n) and 0.0 <= r <= 1.0


@pytest.mark.parametrize("t,p,expected", [
    ([50], [50], 0.0),
    ([50], [40, 90], 40.0),
    ([10, 90], [15], 75.0),
])
def test_hausdorff_cases(t, p, expected):
    assert hausdorff(t, p) == (expected, True)
    assert hausdorff(p, t) == (expected, True)


def test_hausdorff_undefined_when_empty():
    assert hausdorff([], [3]) == (math.inf, False)
    assert hausdorff([], []) == (math.inf, False)


@pytest.mark.parametrize("t,p,expected", [
    ([20, 60], [20, 60], 1.0),
    ([100], [105], 1.0),
    ([100], [50, 105], 2 / 3),
    ([100], [111], 0.0),
    ([], [], 1.0),
    ([10], [], 0.0),
    # one-to-one: two predictions near one truth count once
    ([100], [98, 102], 2 / 3),
])
def test_f1_cases(t, p, expected):
    assert f1_score(t, p) == pytest.approx(expected)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 300), max_size=6), st.lists(st.integers(0, 300), max_size=6))
def test_f1_bounded(t, p):
    assert 0.0 <= f1_score(sorted(set(t)), sorted(set(p))) <= 1.0


def test_annotation_error_signed():
    assert annotation_error([10, 20], [5, 10, 20]) == 1
    m = segmentation_metrics([10, 20], [5], 30)
    assert m.annotation_error == -1 and m.abs_annotation_error == 1


def test_mse_cases():
    x = np.arange(10.0)[:, None]
    mask = np.array([0, 1, 0, 1, 0, 0, 0, 0, 2, 2])
    r = mse_split(x, x, mask)
    assert (r.total, r.interpolation, r.extrapolation) == (0.0, 0.0, 0.0)
    r = mse_split(x, x + 1, mask)
    assert (r.total, r.interpolation, r.extrapolation) == (1.0, 1.0, 1.0)


def test_mse_visible_may_be_missing_but_heldout_may_not():
    x = np.zeros((4, 1))
    pred = np.array([[np.nan], [1.0], [np.nan], [2.0]])
    r = mse_split(x, pred, [0, 1, 0, 2])
    assert r.total == pytest.approx(2.5)
    with pytest.raises(ValueError):
        mse_split(x, pred, [1, 1, 0, 2])
    assert math.isnan(mse_split(x, x, [0, 0, 0, 2]).interpolation)


def test_metrics_deterministic():
    a = segmentation_metrics([10, 40], [12, 33, 70], 100).to_dict()
    b = segmentation_metrics([10, 40], [12, 33, 70], 100).to_dict()
    assert a == b
