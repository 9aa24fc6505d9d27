"""Marginal-likelihood segment costs, joint probability and piecewise reconstruction."""
from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..latent_ode.likelihood import (
    MarginalLikelihoodConfig,
    _variance,
    importance_log_weights,
    log_mean_exp,
)
from ..latent_ode.model import LatentOdeModel, decode, encode_prefixes
from ..ode import NumericalError, SolverConfig
from .search import CostFunction, Segmentation

__all__ = [
    "MarginalCost",
    "GaussianMeanMarginalCost",
    "marginal_cost",
    "segment_seed",
    "joint_log_probability",
    "reconstruct",
    "assign_queries",
    "DegenerateSegmentError",
]


class DegenerateSegmentError(ValueError):
    pass


def segment_seed(master: int, start: int, end: int) -> np.random.SeedSequence:
    """RNG stream for one segment: independent of evaluation order and of K."""
    return np.random.SeedSequence([int(master), int(start), int(end)])


def _fingerprint(values, times) -> int:
    return hash((np.ascontiguousarray(values).tobytes(), np.ascontiguousarray(times).tobytes()))


class MarginalCost(CostFunction):
    """``-log p(segment)`` from the importance-sampled Latent ODE marginal likelihood.

    Results are memoized per (trajectory, start, end).  All segments that
    share an end index are encoded in a single reverse pass; each segment is
    then decoded on its own with its own seeded RNG stream, so a segment's
    cost never depends on which other segments were requested alongside it.
    """

    dense = False

    def __init__(self, model: LatentOdeModel, config: MarginalLikelihoodConfig | None = None,
                 time_decimals: int | None = 2, threads: int = 1):
        self.model = model
        self.config = config or MarginalLikelihoodConfig()
        self.variance = _variance(model, self.config)
        self.time_decimals = time_decimals
        self.threads = max(1, int(threads))
        self.min_size = 1
        self._memo: dict = {}
        self._lock = threading.Lock()
        self.evaluations = 0

    def _segment(self, values, times, s, e, post) -> float:
        rng = np.random.default_rng(segment_seed(self.config.seed, s, e))
        log_w = importance_log_weights(self.model, values[s:e + 1], times[s:e + 1],
                                       self.config.n_samples, rng, posterior=post,
                                       variance=self.variance, time_decimals=self.time_decimals)
        c = -log_mean_exp(log_w)
        if math.isnan(c):
            raise NumericalError(f"segment [{s}, {e}] has a NaN marginal likelihood")
        return c

    def costs(self, values, times, pairs) -> list[float]:
        values = np.asarray(values, dtype=np.float64)
        values = values.reshape(len(values), -1)
        times = np.asarray(times, dtype=np.float64)
        fp = _fingerprint(values, times)
        with self._lock:
            missing = sorted({(s, e) for s, e in pairs if (fp, s, e) not in self._memo})
        by_end: dict[int, list[int]] = {}
        for s, e in missing:
            by_end.setdefault(e, []).append(s)
        jobs = []
        for e, starts in by_end.items():
            posts = encode_prefixes(self.model, values[:e + 1], times[:e + 1], starts)
            jobs.extend((s, e, posts[s]) for s in starts)

        def run(job):
            s, e, post = job
            c = self._segment(values, times, s, e, post)
            with self._lock:
                self._memo[(fp, s, e)] = c
                self.evaluations += 1

        if self.threads > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                list(pool.map(run, jobs))
        else:
            for job in jobs:
                run(job)
        with self._lock:
            return [self._memo[(fp, s, e)] for s, e in pairs]

    def cost(self, values, times, start, end) -> float:
        return self.costs(values, times, [(start, end)])[0]

    def clear(self):
        with self._lock:
            self._memo.clear()


def marginal_cost(model: LatentOdeModel, config: MarginalLikelihoodConfig | None = None,
                  time_decimals: int | None = 2, threads: int = 1) -> MarginalCost:
    return MarginalCost(model, config, time_decimals, threads)


class GaussianMeanMarginalCost(CostFunction):
    """Exact ``-log p(segment)`` for ``x_i ~ N(mu, noise^2)``, ``mu ~ N(prior_mean, prior_std^2)``.

    The unknown level is integrated out analytically, so no penalty is needed
    to stop over-segmentation.  Multivariate data are treated per dimension.
    """

    dense = True

    def __init__(self, noise_std: float, prior_std: float, prior_mean: float = 0.0):
        if noise_std <= 0 or prior_std <= 0:
            raise ValueError("standard deviations must be positive")
        self.noise_var = noise_std ** 2
        self.prior_var = prior_std ** 2
        self.prior_mean = prior_mean
        self.min_size = 1

    def cost(self, values, times, start, end) -> float:
        x = np.asarray(values, dtype=np.float64).reshape(len(values), -1)[start:end + 1]
        x = x - self.prior_mean
        n = x.shape[0]
        s2, t2 = self.noise_var, self.prior_var
        total = 0.0
        for col in x.T:
            sx, sxx = float(np.sum(col)), float(np.sum(col * col))
            quad = (sxx - t2 * sx * sx / (s2 + n * t2)) / s2
            logdet = n * math.log(s2) + math.log1p(n * t2 / s2)
            total += -0.5 * (n * math.log(2 * math.pi) + logdet + quad)
        return -total


def joint_log_probability(model: LatentOdeModel, values, times, segmentation: Segmentation,
                          config: MarginalLikelihoodConfig | None = None,
                          cost: CostFunction | None = None) -> float:
    """Sum of per-segment marginal log likelihoods (segments independent)."""
    cost = cost or MarginalCost(model, config)
    pairs = segmentation.segments()
    return -float(sum(cost.costs(values, times, pairs)))


def assign_queries(times, segmentation: Segmentation, query_times) -> np.ndarray:
    """Segment number for every query time.

    A query belongs to the last segment whose first observation is at or
    before it; queries before the first observation go to the first segment.
    """
    starts = np.asarray(times)[[s for s, _ in segmentation.segments()]]
    idx = np.searchsorted(starts, np.asarray(query_times, dtype=np.float64), side="right") - 1
    return np.maximum(idx, 0)


def _decode_offsets(model, z0, offsets, solver):
    """Decode at signed offsets from the initial-state time (backwards for negatives)."""
    out = np.empty((len(offsets), model.config.data_dim))
    fwd = offsets >= 0
    if np.any(fwd):
        q, inv = np.unique(offsets[fwd], return_inverse=True)
        grid = q if q[0] == 0.0 else np.concatenate([[0.0], q])
        pred = decode(model, z0, grid, solver)
        out[fwd] = pred[len(grid) - len(q):][inv]
    if np.any(~fwd):
        # the latent field is autonomous: run the negated field forward in time
        neg = -model.latent_field().weights[-1], -model.latent_field().biases[-1]
        flipped = model.copy()
        last = len(model.latent_field().weights) - 1
        flipped.params[f"latent_field.{last}.weight"] = neg[0]
        flipped.params[f"latent_field.{last}.bias"] = neg[1]
        q, inv = np.unique(-offsets[~fwd], return_inverse=True)
        grid = np.concatenate([[0.0], q])
        pred = decode(flipped, z0, grid, solver)
        out[~fwd] = pred[1:][inv]
    return out


def reconstruct(model: LatentOdeModel, values, times, segmentation: Segmentation, query_times,
                solver: SolverConfig | None = None) -> np.ndarray:
    """Piecewise reconstruction: per segment, decode the posterior-mean initial state."""
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64).reshape(len(times), -1)
    query_times = np.asarray(query_times, dtype=np.float64)
    which = assign_queries(times, segmentation, query_times)
    out = np.empty((len(query_times), model.config.data_dim))
    for i, (s, e) in enumerate(segmentation.segments()):
        sel = which == i
        if not np.any(sel):
            continue
        if e < s:
            raise DegenerateSegmentError(f"segment {i} has no observations")
        post = encode_prefixes(model, values[s:e + 1], times[s:e + 1], [0])[0]
        out[sel] = _decode_offsets(model, post.mean, query_times[sel] - times[s], solver)
    return out
