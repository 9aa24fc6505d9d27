"""Exact optimal partitioning and PELT over an arbitrary segment cost."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..datagen.trajectory import validate_changepoints

__all__ = [
    "Segmentation",
    "CostFunction",
    "TableCost",
    "PeltConfig",
    "optimal_partition",
    "pelt_segment",
    "segments_of",
]

INF = math.inf


def segments_of(changepoints, n: int) -> list[tuple[int, int]]:
    """Inclusive ``(start, end)`` pairs implied by segment-final changepoint indices."""
    bounds = [-1, *changepoints, n - 1]
    return [(a + 1, b) for a, b in zip(bounds[:-1], bounds[1:])]


@dataclass(frozen=True)
class Segmentation:
    changepoints: tuple
    n: int
    objective: float | None = None
    stats: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "changepoints", tuple(int(c) for c in self.changepoints))
        validate_changepoints(self.changepoints, self.n)

    def segments(self) -> list[tuple[int, int]]:
        return segments_of(self.changepoints, self.n)

    def __len__(self):
        return len(self.changepoints)


class CostFunction:
    """Segment cost (lower is better) over inclusive index ranges.

    Subclasses implement :meth:`cost`.  Costs that are cheap to tabulate set
    ``dense = True``; the search then fills the whole ``(n+1, n+1)`` table and
    runs the compiled dynamic program over it.
    """

    min_size: int = 1
    dense: bool = False

    def cost(self, values, times, start: int, end: int) -> float:
        raise NotImplementedError

    def costs(self, values, times, pairs) -> list[float]:
        return [self.cost(values, times, s, e) for s, e in pairs]

    def table(self, values, times, min_size: int | None = None) -> np.ndarray:
        """``table[a, b]`` = cost of samples ``a .. b-1``; ``inf`` below the minimum size."""
        n = len(values)
        m = max(self.min_size, min_size or 1)
        out = np.full((n + 1, n + 1), INF)
        for a in range(n):
            for b in range(a + m, n + 1):
                out[a, b] = self.cost(values, times, a, b - 1)
        return out


class TableCost(CostFunction):
    """Cost read from a fixed ``(n+1, n+1)`` table; handy for tests and oracles."""

    dense = True

    def __init__(self, table, min_size: int = 1):
        self._table = np.asarray(table, dtype=np.float64)
        self.min_size = min_size

    def cost(self, values, times, start, end):
        return float(self._table[start, end + 1])

    def table(self, values, times, min_size=None):
        return self._table


@dataclass(frozen=True)
class PeltConfig:
    beta: float = 0.0
    K: float = INF
    min_size: int = 20
    time_decimals: int | None = 2

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("penalty beta must be >= 0")
        if not self.K >= 0:
            raise ValueError("pruning constant K must be >= 0")
        if self.min_size < 1:
            raise ValueError("minimum segment length must be >= 1")


def _result(n, F, last, stats, started) -> Segmentation:
    if not math.isfinite(F[n]):
        raise ValueError("no admissible segmentation (cost infinite everywhere)")
    positions = []
    p = int(last[n])
    while p > 0:
        positions.append(p)
        p = int(last[p])
    cps = [p - 1 for p in reversed(positions)]
    stats = dict(stats, seconds=time.perf_counter() - started)
    return Segmentation(cps, n, float(F[n]), stats)


def _search(values, times, cost: CostFunction, beta: float, min_size: int, K: float):
    started = time.perf_counter()
    n = len(values)
    m = max(int(min_size), int(cost.min_size))
    if n < m:
        raise ValueError(f"trajectory of length {n} is shorter than the minimum segment length {m}")
    if cost.dense:
        table = np.ascontiguousarray(cost.table(values, times, m), dtype=np.float64)
        F, last, _, stats = kernels.pelt_table(table, float(beta), m, float(K))
    else:
        def seg_costs(starts, b):
            return cost.costs(values, times, [(a, b - 1) for a in starts])
        F, last, _, stats = kernels.pelt_core(n, seg_costs, float(beta), m, float(K))
    return _result(n, F, last, stats, started)


def optimal_partition(values, times, cost: CostFunction, beta: float, min_size: int = 1
                      ) -> Segmentation:
    """Exact minimizer of ``sum(cost) + beta * (number of segments)``.

    ``objective`` follows the recursion with ``F(0) = -beta``, so it equals
    the summed segment cost plus ``beta`` per changepoint.  Ties go to fewer
    changepoints, then to the lexicographically smallest changepoint list.
    """
    if beta < 0:
        raise ValueError("penalty beta must be >= 0")
    return _search(values, times, cost, beta, min_size, INF)


def pelt_segment(values, times, cost: CostFunction, config: PeltConfig | None = None
                 ) -> Segmentation:
    """Optimal partitioning with PELT pruning.

    After ``F(b)`` is known, a candidate ``a`` is discarded when
    ``F(a) + cost(a, b) - K > F(b)``.  ``K = inf`` disables pruning and
    reproduces :func:`optimal_partition` exactly.  ``stats`` reports evaluated
    and pruned candidate counts plus wall time.
    """
    config = config or PeltConfig()
    return _search(values, times, cost, config.beta, config.min_size, config.K)
