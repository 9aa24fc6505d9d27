"""Segmentation agreement metrics and held-out reconstruction error."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .datagen.trajectory import EXTRAP_HELDOUT, INTERP_HELDOUT, validate_changepoints

__all__ = [
    "SegMetrics",
    "ReconMetrics",
    "rand_index",
    "rand_index_pairs",
    "hausdorff",
    "f1_score",
    "annotation_error",
    "mse_split",
    "segmentation_metrics",
]


@dataclass
class SegMetrics:
    rand_index: float
    hausdorff: float
    hausdorff_defined: bool
    f1: float
    annotation_error: int

    @property
    def abs_annotation_error(self) -> int:
        return abs(self.annotation_error)

    def to_dict(self):
        d = asdict(self)
        d["abs_annotation_error"] = self.abs_annotation_error
        return d


@dataclass
class ReconMetrics:
    total: float
    interpolation: float
    extrapolation: float

    def to_dict(self):
        return asdict(self)


def _sizes(cps, n):
    bounds = np.concatenate([[-1], np.asarray(cps, dtype=np.int64), [n - 1]])
    return bounds, np.diff(bounds)


def rand_index(truth, pred, n: int) -> float:
    """Fraction of index pairs on which the two segmentations agree (same / different segment).

    Counted from segment overlaps: pairs together in both, plus pairs apart in
    both, without enumerating pairs.
    """
    if n < 2:
        raise ValueError("rand index needs n >= 2")
    truth, pred = list(truth), list(pred)
    validate_changepoints(truth, n)
    validate_changepoints(pred, n)
    bt, st = _sizes(truth, n)
    bp, sp = _sizes(pred, n)
    # overlap of truth segment i (bt[i]+1 .. bt[i+1]) with pred segment j
    lo = np.maximum(bt[:-1, None], bp[None, :-1])
    hi = np.minimum(bt[1:, None], bp[None, 1:])
    overlap = np.maximum(hi - lo, 0)
    pairs = lambda c: c * (c - 1) // 2  # noqa: E731
    both = int(np.sum(pairs(overlap)))
    same_t = int(np.sum(pairs(st)))
    same_p = int(np.sum(pairs(sp)))
    total = n * (n - 1) // 2
    agree = total - same_t - same_p + 2 * both
    return agree / total


def rand_index_pairs(truth, pred, n: int) -> float:
    """Direct O(n^2) pair enumeration of the Rand index (reference implementation)."""
    if n < 2:
        raise ValueError("rand index needs n >= 2")
    lt = np.searchsorted(np.asarray(list(truth), dtype=np.int64), np.arange(n), side="left")
    lp = np.searchsorted(np.asarray(list(pred), dtype=np.int64), np.arange(n), side="left")
    agree = 0
    for i in range(n):
        for j in range(i + 1, n):
            agree += (lt[i] == lt[j]) == (lp[i] == lp[j])
    return agree / (n * (n - 1) / 2)


def hausdorff(truth, pred) -> tuple[float, bool]:
    """Symmetric Hausdorff distance in index units, as ``(value, defined)``.

    Undefined (``inf``, ``False``) when either set is empty.
    """
    t = np.asarray(list(truth), dtype=np.float64)
    p = np.asarray(list(pred), dtype=np.float64)
    if len(t) == 0 or len(p) == 0:
        return math.inf, False
    d = np.abs(t[:, None] - p[None, :])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max())), True


def f1_score(truth, pred, tolerance: int = 10) -> float:
    """Tolerance-matched F1; each true changepoint matches at most one prediction."""
    truth, pred = list(truth), list(pred)
    if not truth and not pred:
        return 1.0
    if not truth or not pred:
        return 0.0
    cand = sorted((abs(p - t), i, j) for i, p in enumerate(pred) for j, t in enumerate(truth)
                  if abs(p - t) <= tolerance)
    used_p, used_t = set(), set()
    for _, i, j in cand:
        if i not in used_p and j not in used_t:
            used_p.add(i)
            used_t.add(j)
    tp = len(used_p)
    if tp == 0:
        return 0.0
    precision, recall = tp / len(pred), tp / len(truth)
    return 2 * precision * recall / (precision + recall)


def annotation_error(truth, pred) -> int:
    """Signed count difference: predicted minus true."""
    return len(list(pred)) - len(list(truth))


def segmentation_metrics(truth, pred, n: int, tolerance: int = 10) -> SegMetrics:
    h, ok = hausdorff(truth, pred)
    return SegMetrics(rand_index(truth, pred, n), h, ok, f1_score(truth, pred, tolerance),
                      annotation_error(truth, pred))


def mse_split(truth_values, predictions, mask) -> ReconMetrics:
    """Mean squared error over all held-out points and per held-out class.

    ``predictions`` may contain NaN at visible points but must be finite at
    every held-out point.  A class with no points reports NaN.
    """
    truth_values = np.asarray(truth_values, dtype=np.float64)
    truth_values = truth_values.reshape(len(truth_values), -1)
    predictions = np.asarray(predictions, dtype=np.float64).reshape(truth_values.shape)
    mask = np.asarray(mask)
    held = mask != 0
    if not np.all(np.isfinite(predictions[held])):
        raise ValueError("prediction missing at a held-out point")

    def mse(sel):
        if not np.any(sel):
            return math.nan
        return float(np.mean((predictions[sel] - truth_values[sel]) ** 2))

    return ReconMetrics(mse(held), mse(mask == INTERP_HELDOUT), mse(mask == EXTRAP_HELDOUT))
