"""Classic change-point costs (kernel mean-change, Gaussian, autoregressive) and known-k search."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .datagen.trajectory import VISIBLE, Trajectory
from .ode import NumericalError
from .segmentation.search import CostFunction, Segmentation

__all__ = [
    "RbfCostConfig",
    "ArCostConfig",
    "rbf_cost",
    "norm_cost",
    "ar_cost",
    "median_heuristic",
    "RbfCost",
    "NormCost",
    "ArCost",
    "interpolate_to_grid",
    "GridResult",
    "segment_known_k",
    "NORM_RIDGE",
]

NORM_RIDGE = 1e-6


def _as2d(values):
    x = np.asarray(values, dtype=np.float64)
    return x.reshape(len(x), -1)


def median_heuristic(values) -> float:
    """``1 / median`` of the pairwise squared distances (1.0 if they are all zero)."""
    x = _as2d(values)
    i, j = np.triu_indices(len(x), 1)
    d2 = np.sum((x[i] - x[j]) ** 2, axis=1)
    med = float(np.median(d2)) if len(d2) else 0.0
    return 1.0 / med if med > 0 else 1.0


@dataclass(frozen=True)
class RbfCostConfig:
    gamma: float | None = None  # None: median heuristic over the whole trajectory

    def __post_init__(self):
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("bandwidth gamma must be positive")


@dataclass(frozen=True)
class ArCostConfig:
    order: int = 10

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("AR order must be >= 1")


def rbf_cost(values, start: int, end: int, config: RbfCostConfig | None = None) -> float:
    """``sum_t k(x_t, x_t) - (1/|I|) sum_{s,t} k(x_s, x_t)`` over ``start..end`` inclusive."""
    config = config or RbfCostConfig()
    x = _as2d(values)
    gamma = config.gamma if config.gamma is not None else median_heuristic(x)
    seg = x[start:end + 1]
    m = len(seg)
    if m < 1:
        raise ValueError("empty segment")
    d2 = np.sum((seg[:, None, :] - seg[None, :, :]) ** 2, axis=-1)
    return max(0.0, float(m - np.sum(np.exp(-gamma * d2)) / m))


def norm_cost(values, start: int, end: int, ridge: float = NORM_RIDGE) -> float:
    """``|I| log det(cov + ridge I)`` with the maximum-likelihood (1/|I|) covariance."""
    seg = _as2d(values)[start:end + 1]
    m, d = seg.shape
    if m < d + 1:
        raise ValueError(f"segment of {m} points too short for dimension {d}")
    c = seg - seg.mean(axis=0)
    cov = c.T @ c / m + ridge * np.eye(d)
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        raise NumericalError("covariance not positive definite after ridge")
    return float(m * logdet)


def ar_cost(values, start: int, end: int, config: ArCostConfig | None = None) -> float:
    """Residual sum of squares of a per-dimension AR(p) fit with intercept."""
    p = (config or ArCostConfig()).order
    seg = _as2d(values)[start:end + 1]
    m = len(seg)
    if m < p + 2:
        raise ValueError(f"segment of {m} points too short for AR order {p}")
    total = 0.0
    for col in seg.T:
        Z = np.column_stack([col[p - 1 - j:m - 1 - j] for j in range(p)] + [np.ones(m - p)])
        y = col[p:]
        theta = np.linalg.lstsq(Z, y, rcond=None)[0]
        r = y - Z @ theta
        total += float(r @ r)
    return total


class RbfCost(CostFunction):
    dense = True
    min_size = 2

    def __init__(self, config: RbfCostConfig | None = None):
        self.config = config or RbfCostConfig()

    def _gamma(self, values):
        return self.config.gamma if self.config.gamma is not None else median_heuristic(values)

    def cost(self, values, times, start, end):
        return rbf_cost(values, start, end, RbfCostConfig(self._gamma(values)))

    def table(self, values, times, min_size=None):
        x = np.ascontiguousarray(_as2d(values))
        out = kernels.rbf_cost_matrix(x, float(self._gamma(x)))
        m = max(self.min_size, min_size or 1)
        short = np.arange(len(x) + 1)[None, :] - np.arange(len(x) + 1)[:, None] < m
        out[short] = math.inf
        return out


class NormCost(CostFunction):
    dense = True

    def __init__(self, ridge: float = NORM_RIDGE, dim: int = 1):
        self.ridge = ridge
        self.min_size = dim + 1

    def cost(self, values, times, start, end):
        return norm_cost(values, start, end, self.ridge)

    def table(self, values, times, min_size=None):
        m = max(min_size or 1, _as2d(values).shape[1] + 1)
        return super().table(values, times, m)


class ArCost(CostFunction):
    dense = True

    def __init__(self, config: ArCostConfig | None = None):
        self.config = config or ArCostConfig()
        self.min_size = self.config.order + 2

    def cost(self, values, times, start, end):
        return ar_cost(values, start, end, self.config)


@dataclass
class GridResult:
    times: np.ndarray
    values: np.ndarray
    source_times: np.ndarray

    def to_source_index(self, grid_index) -> np.ndarray:
        """Nearest original (visible) index for each grid index."""
        g = self.times[np.asarray(grid_index, dtype=int)]
        idx = np.searchsorted(self.source_times, g)
        idx = np.clip(idx, 1, len(self.source_times) - 1)
        left = self.source_times[idx - 1]
        right = self.source_times[idx]
        return np.where(g - left <= right - g, idx - 1, idx)

    def map_changepoints(self, grid_cps) -> list[int]:
        """Grid changepoints mapped onto original indices; duplicates and the final index dropped."""
        n = len(self.source_times)
        out = []
        for c in self.to_source_index(list(grid_cps)):
            c = int(c)
            if c < n - 1 and (not out or c > out[-1]):
                out.append(c)
        return out


def interpolate_to_grid(traj, grid_size: int) -> GridResult:
    """Linear interpolation of the visible points onto a uniform grid over their time span."""
    if isinstance(traj, Trajectory):
        keep = traj.mask == VISIBLE
        t, v = traj.times[keep], traj.values[keep]
    else:
        t, v = traj
        t = np.asarray(t, dtype=np.float64)
        v = _as2d(v)
    if len(t) < 2:
        raise ValueError("need at least two visible observations")
    grid = np.linspace(t[0], t[-1], grid_size)
    vals = np.column_stack([np.interp(grid, t, v[:, d]) for d in range(v.shape[1])])
    return GridResult(grid, vals, t)


def _known_path(back, k, n):
    positions = []
    p = n
    for j in range(k, 0, -1):
        p = int(back[j, p])
        positions.append(p)
    return [q - 1 for q in reversed(positions)]


def segment_known_k(values, times, cost: CostFunction, k: int, min_size: int = 1
                    ) -> Segmentation:
    """Exact minimum-cost segmentation with exactly ``k`` changepoints (no penalty)."""
    n = len(values)
    m = max(int(min_size), int(cost.min_size))
    if k < 0:
        raise ValueError("k must be >= 0")
    if (k + 1) * m > n:
        raise ValueError(f"{k} changepoints infeasible for length {n} with minimum segment {m}")
    table = np.ascontiguousarray(cost.table(values, times, m), dtype=np.float64)
    G, back = kernels.known_k_table(table, int(k), m)
    if not math.isfinite(G[k, n]):
        raise ValueError("no admissible segmentation with finite cost")
    return Segmentation(_known_path(back, k, n), n, float(G[k, n]), {"k": k})
