"""Pure-Python reference versions of the compiled kernels.

Positions are prefix lengths: the segment ``(a, b]`` covers samples
``a .. b-1``, and ``cost[a, b]`` is its cost.  A segmentation is the list of
interior positions; the changepoint index of position ``p`` is ``p - 1``.
"""
from __future__ import annotations

import math

import numpy as np

INF = math.inf


def _path(last, p):
    out = []
    while p > 0:
        out.append(int(p))
        p = last[p]
    return out[::-1]


def _prefer(a, b, count, last) -> bool:
    """Does ending the previous segment at ``a`` beat ending it at ``b`` on a tie?"""
    ca, cb = count[a] + (a > 0), count[b] + (b > 0)
    if ca != cb:
        return ca < cb
    return _path(last, a) < _path(last, b)


def pelt_core(n: int, segment_costs, beta: float, min_size: int, K: float = INF):
    """Optimal partitioning with PELT pruning over a lazily evaluated cost.

    ``segment_costs(starts, b)`` returns the costs of segments ``(a, b]`` for
    every ``a`` in ``starts``.  Candidate ``a`` is dropped after step ``b`` when
    ``F[a] + cost(a, b) - K > F[b]``; ``K = inf`` never prunes, which makes
    this exact optimal partitioning.  Returns ``(F, last, count, stats)``.
    """
    F = np.full(n + 1, INF)
    last = np.full(n + 1, -1, dtype=np.int64)
    count = np.zeros(n + 1, dtype=np.int64)
    F[0] = -beta
    R = [0]
    evaluated = pruned = max_cand = 0
    for b in range(min_size, n + 1):
        ready = [a for a in R if b - a >= min_size]
        if not ready:
            continue
        max_cand = max(max_cand, len(ready))
        costs = segment_costs(ready, b)
        evaluated += len(ready)
        best_a, best_v = -1, INF
        for a, c in zip(ready, costs):
            v = (F[a] + c) + beta
            if v < best_v or (v == best_v and best_a >= 0 and v != INF
                              and _prefer(a, best_a, count, last)):
                best_a, best_v = a, v
        if best_a < 0:
            continue
        F[b] = best_v
        last[b] = best_a
        count[b] = count[best_a] + (1 if best_a > 0 else 0)
        if K != INF:
            cost_of = dict(zip(ready, costs))
            keep = []
            for a in R:
                c = cost_of.get(a)
                if c is None or (F[a] + c) - K <= F[b]:
                    keep.append(a)
                else:
                    pruned += 1
            R = keep
        R.append(b)
    stats = {"evaluated": evaluated, "pruned": pruned, "max_candidates": max_cand}
    return F, last, count, stats


def pelt_table(cost: np.ndarray, beta: float, min_size: int, K: float = INF):
    n = cost.shape[0] - 1
    return pelt_core(n, lambda starts, b: cost[starts, b], beta, min_size, K)


def known_k_table(cost: np.ndarray, k: int, min_size: int):
    """Minimum total cost with exactly ``k`` interior positions.

    Returns ``(G, back)``: ``G[j, b]`` is the best cost of splitting the first
    ``b`` samples into ``j + 1`` segments, ``back`` the matching last position.
    """
    n = cost.shape[0] - 1
    G = np.full((k + 1, n + 1), INF)
    back = np.full((k + 1, n + 1), -1, dtype=np.int64)
    for b in range(min_size, n + 1):
        G[0, b] = cost[0, b]
        back[0, b] = 0
    for j in range(1, k + 1):
        for b in range((j + 1) * min_size, n + 1):
            best_a, best_v = -1, INF
            for a in range(j * min_size, b - min_size + 1):
                if G[j - 1, a] == INF:
                    continue
                v = G[j - 1, a] + cost[a, b]
                if v < best_v or (v == best_v and best_a >= 0
                                  and _known_path(back, j - 1, a) < _known_path(back, j - 1, best_a)):
                    best_a, best_v = a, v
            G[j, b] = best_v
            back[j, b] = best_a
    return G, back


def _known_path(back, j, p):
    out = [p]
    while j > 0:
        p = back[j, p]
        out.append(int(p))
        j -= 1
    return out[::-1]


def rbf_cost_matrix(values: np.ndarray, gamma: float) -> np.ndarray:
    """``cost[a, b]`` of the kernel mean-change cost for every segment ``(a, b]``.

    The block sum of the Gram matrix is grown one row/column at a time so
    every entry is a short sequential sum (no large prefix-sum cancellation).
    """
    x = np.asarray(values, dtype=np.float64)
    n = x.shape[0]
    diff = x[:, None, :] - x[None, :, :]
    gram = np.exp(-gamma * np.sum(diff * diff, axis=-1))
    out = np.full((n + 1, n + 1), np.nan)
    for a in range(n):
        sub = gram[a:, a:]
        col = np.cumsum(sub, axis=0)  # col[i, j] = sum_{s=a}^{a+i} G[s, a+j]
        m = n - a
        inner = np.zeros(m)
        inner[1:] = col[np.arange(m - 1), np.arange(1, m)]
        block = np.cumsum(2.0 * inner + np.diag(sub))
        sizes = np.arange(1, m + 1)
        out[a, a + 1:] = np.maximum(sizes - block / sizes, 0.0)
    return out


def lv_field(params):
    alpha, beta, delta, gamma = params

    def f(t, y):
        x, z = y[0], y[1]
        return np.array([alpha * x - beta * x * z, delta * x * z - gamma * z])
    return f


def lv_solve(params, y0, times, rtol=1e-8, atol=1e-8, max_steps=100_000):
    """Lotka-Volterra states at ``times`` from ``y0`` at ``times[0]`` (dopri5)."""
    from ..ode import SolverConfig, ode_solve

    cfg = SolverConfig("dopri5", rtol=rtol, atol=atol, max_steps=max_steps)
    sol = ode_solve(lv_field(params), np.asarray(y0, dtype=np.float64), times, cfg)
    return np.asarray(sol.states), sol.n_accepted + sol.n_rejected
