"""Sine-wave and Lotka-Volterra hybrid trajectory factories plus the masking protocol."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .. import kernels
from ..ode import NonConvergenceError, NumericalError
from .trajectory import EXTRAP_HELDOUT, INTERP_HELDOUT, Trajectory

__all__ = [
    "SineSpec",
    "LvSpec",
    "gen_sine",
    "gen_lv",
    "apply_masking",
    "trajectory_rng",
    "GenerationError",
]

_GRID_TAG = 0x5EED  # stream tag for shared (aligned) observation grids
_MAX_DRAWS = 1000


class GenerationError(RuntimeError):
    pass


def _check_range(name, r, positive=False):
    lo, hi = r
    if lo > hi:
        raise ValueError(f"{name}: empty range {r}")
    if positive and lo < 0:
        raise ValueError(f"{name}: range must be non-negative, got {r}")


@dataclass(frozen=True)
class SineSpec:
    amplitude: tuple = (-8.0, 8.0)
    frequency: tuple = (2.0, 4.0)
    duration: tuple = (3.0, 5.0)
    n_obs: tuple = (50, 150)
    min_amplitude_change: float = 2.5
    noise_std: float = 0.025
    n_changepoints: tuple = (0, 2)
    total_obs: int | None = None  # fixed length per trajectory, split across SDFs
    min_segment_obs: int = 20  # only used with total_obs
    aligned: bool = False

    def __post_init__(self):
        for name in ("amplitude", "frequency", "duration", "n_obs", "n_changepoints"):
            _check_range(name, getattr(self, name), name != "amplitude")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class LvSpec:
    alpha: tuple = (0.5, 1.5)
    beta: tuple = (0.5, 1.5)
    delta: tuple = (1.5, 2.5)
    gamma: tuple = (0.5, 1.5)
    x0: tuple = (1.5, 2.5)
    y0: tuple = (0.5, 1.5)
    n_obs: tuple = (175, 225)
    end_time: tuple = (14.0, 16.0)
    min_coef_change: float = 0.6
    noise_std: float = 0.01
    variant: str = "JD"
    n_changepoints: tuple = (0, 2)
    total_obs: int | None = None
    min_segment_obs: int = 20
    aligned: bool = False
    rtol: float = 1e-8
    atol: float = 1e-8
    max_retries: int = 10

    def __post_init__(self):
        for name in ("alpha", "beta", "delta", "gamma", "x0", "y0", "n_obs", "end_time",
                     "n_changepoints"):
            _check_range(name, getattr(self, name), True)
        if self.x0[0] <= 0 or self.y0[0] <= 0:
            raise ValueError("initial populations must be positive")
        if self.variant not in ("JD", "SD"):
            raise ValueError(f"variant must be 'JD' or 'SD', got {self.variant!r}")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")

    def to_dict(self):
        return asdict(self)


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def _uniform(rng, r):
    lo, hi = r
    return float(lo) if lo == hi else float(rng.uniform(lo, hi))


def _count(rng, r):
    return int(rng.integers(r[0], r[1] + 1))


class _Grid:
    """Observation-time fractions in [0, 1), optionally shared across a dataset."""

    def __init__(self, seed: int, aligned: bool):
        self.seed = seed
        self.aligned = aligned
        self._cache: dict[int, np.ndarray] = {}

    def fractions(self, rng, n: int) -> np.ndarray:
        if not self.aligned:
            return self._draw(rng, n)
        if n not in self._cache:
            grid_rng = np.random.default_rng(np.random.SeedSequence([self.seed, _GRID_TAG, n]))
            self._cache[n] = self._draw(grid_rng, n)
        return self._cache[n]

    @staticmethod
    def _draw(rng, n):
        while True:
            u = np.sort(rng.uniform(0.0, 1.0, n))
            if n < 2 or np.all(np.diff(u) > 0):
                return u


def _split_counts(rng, spec, durations) -> list[int]:
    if spec.total_obs is None:
        return [_count(rng, spec.n_obs) for _ in durations]
    k = len(durations)
    m = spec.min_segment_obs
    if k * m > spec.total_obs:
        raise ValueError(f"total_obs={spec.total_obs} cannot hold {k} segments of {m}")
    # proportional to duration, each at least the minimum segment length
    extra = spec.total_obs - k * m
    share = np.asarray(durations) / np.sum(durations) * extra
    counts = np.floor(share).astype(int)
    order = np.argsort(-(share - counts), kind="stable")
    counts[order[: extra - counts.sum()]] += 1
    return [int(c) + m for c in counts]


def _sample_amplitudes(rng, spec: SineSpec, k: int) -> list[float]:
    amps = [_uniform(rng, spec.amplitude)]
    for _ in range(k - 1):
        for _ in range(_MAX_DRAWS):
            a = _uniform(rng, spec.amplitude)
            if abs(a - amps[-1]) >= spec.min_amplitude_change:
                break
        else:
            raise GenerationError("cannot satisfy the minimum amplitude change with this range")
        amps.append(a)
    return amps


def gen_sine(spec: SineSpec, count: int, seed: int, start_index: int = 0) -> list[Trajectory]:
    """Hybrid sine trajectories with 0-2 changepoints; segment ``k`` is
    ``A_k sin(w_k (t - T_k) + phi_k)`` on its own time window ``[T_k, T_k + d_k)``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    grid = _Grid(seed, spec.aligned)
    out = []
    for i in range(start_index, start_index + count):
        rng = trajectory_rng(seed, i)
        k = _count(rng, spec.n_changepoints) + 1
        amps = _sample_amplitudes(rng, spec, k)
        durations = [_uniform(rng, spec.duration) for _ in range(k)]
        counts = _split_counts(rng, spec, durations)
        times, values, cps, params = [], [], [], []
        t0 = 0.0
        for j in range(k):
            freq = _uniform(rng, spec.frequency)
            phase = float(rng.uniform(0.0, 2 * np.pi))
            local = grid.fractions(rng, counts[j]) * durations[j]
            times.append(t0 + local)
            values.append(amps[j] * np.sin(freq * local + phase))
            params.append({"amplitude": amps[j], "frequency": freq, "phase": phase,
                           "start_time": t0, "duration": durations[j], "n_obs": counts[j]})
            t0 += durations[j]
            cps.append(sum(counts[: j + 1]) - 1)
        v = np.concatenate(values)
        if spec.noise_std > 0:
            v = v + rng.normal(0.0, spec.noise_std, v.shape)
        out.append(Trajectory(np.concatenate(times), v[:, None], None, cps[:-1], params))
    return out


def _sample_coefs(rng, spec: LvSpec, prev):
    for _ in range(_MAX_DRAWS):
        c = np.array([_uniform(rng, spec.alpha), _uniform(rng, spec.beta),
                      _uniform(rng, spec.delta), _uniform(rng, spec.gamma)])
        if prev is None or np.linalg.norm(c - prev) >= spec.min_coef_change:
            return c
    raise GenerationError("cannot satisfy the minimum coefficient change with these ranges")


def _lv_segment(rng, spec: LvSpec, grid, prev_coefs, y_start, n):
    """One SDF; retries fresh draws when the integrator fails."""
    last_exc = None
    for _ in range(spec.max_retries):
        coefs = _sample_coefs(rng, spec, prev_coefs)
        y0 = y_start if y_start is not None else np.array([_uniform(rng, spec.x0),
                                                           _uniform(rng, spec.y0)])
        end = _uniform(rng, spec.end_time)
        local = grid.fractions(rng, n) * end
        query = np.concatenate([[0.0], local, [end]])
        try:
            states, _ = kernels.lv_solve(coefs, y0, query, spec.rtol, spec.atol)
        except (NonConvergenceError, NumericalError) as exc:
            last_exc = exc
            continue
        return coefs, y0, end, local, states[1:-1], states[-1]
    raise GenerationError(f"Lotka-Volterra integration failed {spec.max_retries} times: {last_exc}")


def gen_lv(spec: LvSpec, count: int, seed: int, start_index: int = 0) -> list[Trajectory]:
    """Hybrid Lotka-Volterra trajectories (``dx = a x - b x y``, ``dy = d x y - g y``).

    JD restarts populations at every changepoint; SD carries the populations
    over and switches only the coefficients.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    grid = _Grid(seed, spec.aligned)
    out = []
    for i in range(start_index, start_index + count):
        rng = trajectory_rng(seed, i)
        k = _count(rng, spec.n_changepoints) + 1
        if spec.total_obs is None:
            counts = [_count(rng, spec.n_obs) for _ in range(k)]
        else:
            counts = _split_counts(rng, spec, [1.0] * k)
        times, values, cps, params = [], [], [], []
        t0, coefs, y_end = 0.0, None, None
        for j in range(k):
            carry = y_end if (spec.variant == "SD" and j > 0) else None
            coefs, y0, end, local, states, y_end = _lv_segment(rng, spec, grid, coefs, carry,
                                                              counts[j])
            times.append(t0 + local)
            values.append(states)
            params.append({"alpha": coefs[0], "beta": coefs[1], "delta": coefs[2],
                           "gamma": coefs[3], "x0": float(y0[0]), "y0": float(y0[1]),
                           "start_time": t0, "duration": end, "n_obs": counts[j]})
            t0 += end
            cps.append(sum(counts[: j + 1]) - 1)
        v = np.concatenate(values)
        if spec.noise_std > 0:
            v = v + rng.normal(0.0, spec.noise_std, v.shape)
        params = [{k2: float(x) if isinstance(x, np.floating) else x for k2, x in p.items()}
                  for p in params]
        out.append(Trajectory(np.concatenate(times), v, None, cps[:-1], params))
    return out


def apply_masking(traj: Trajectory, seed: int, shared: bool = True, index: int = 0,
                  extrap_frac: float = 0.2, interp_frac: float = 0.25) -> Trajectory:
    """Hold out the last ``extrap_frac`` of points and ``interp_frac`` of the rest.

    With ``shared`` the interior pattern depends only on ``seed`` and the
    trajectory length, so equal-length trajectories get the same mask.
    """
    n = len(traj)
    if n < 10:
        raise ValueError("masking needs at least 10 observations")
    n_ex = int(round(extrap_frac * n))
    head = n - n_ex
    n_in = int(round(interp_frac * head))
    key = [int(seed), n] if shared else [int(seed), n, int(index)]
    rng = np.random.default_rng(np.random.SeedSequence(key))
    mask = np.zeros(n, dtype=np.int64)
    mask[head:] = EXTRAP_HELDOUT
    mask[np.sort(rng.choice(head, size=n_in, replace=False))] = INTERP_HELDOUT
    return Trajectory(traj.times.copy(), traj.values.copy(), mask, list(traj.changepoints),
                      list(traj.segment_params))
