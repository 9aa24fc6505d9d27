"""Reference implementations used as test oracles (slow, obviously correct)."""
import itertools
import math

import numpy as np

from hybridseg.baselines import ArCost, ArCostConfig, NormCost, RbfCost, RbfCostConfig
from hybridseg.segmentation import TableCost


def brute_force(table, n, beta, min_size=1):
    """Enumerate every segmentation; same accumulation order as the search.

    Returns ``(objective, changepoints)``; ties go to fewer changepoints, then
    to the lexicographically smaller list.
    """
    best = None
    for k in range(n):
        for cps in itertools.combinations(range(n - 1), k):
            bounds = [0, *[c + 1 for c in cps], n]
            if any(b - a < min_size for a, b in zip(bounds[:-1], bounds[1:])):
                continue
            obj = -beta
            for a, b in zip(bounds[:-1], bounds[1:]):
                obj = (obj + table[a, b]) + beta
            if not math.isfinite(obj):
                continue
            key = (obj, k, list(cps))
            if best is None or key < best:
                best = key
    return best[0], tuple(best[2])


def random_instance(kind, rng, n):
    """``(values, cost, table)`` for one of the instance families."""
    if kind == "table":
        table = np.full((n + 1, n + 1), math.inf)
        for a in range(n):
            for b in range(a + 1, n + 1):
                # coarse values so that ties actually occur
                table[a, b] = float(rng.integers(0, 6)) * 0.5
        return np.zeros((n, 1)), TableCost(table), table
    k = int(rng.integers(1, 4))
    cuts = np.sort(rng.choice(np.arange(2, n - 1), k - 1, replace=False)) if k > 1 else []
    levels = rng.normal(0, 3, k)
    values = np.concatenate([np.full(len(c), lv) for c, lv in
                             zip(np.split(np.arange(n), cuts), levels)])
    values = (values + rng.normal(0, 1, n))[:, None]
    if kind == "norm":
        cost = NormCost()
    elif kind == "rbf":
        cost = RbfCost(RbfCostConfig())
    elif kind == "ar":
        cost = ArCost(ArCostConfig(order=1))
    else:
        raise ValueError(kind)
    table = cost.table(values, None, 1)
    return values, cost, table
