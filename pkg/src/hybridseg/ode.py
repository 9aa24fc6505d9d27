"""ODE integration: fixed-step Euler and RK4, adaptive Dormand-Prince 5(4).

Fields are callables ``f(t, y) -> dy/dt`` over numpy arrays or tape tensors.
Every arithmetic operation goes through the tensor layer, so solving with
tensor parameters records the unrolled solver on the tape
(discretize-then-optimize).  Step-size control only ever looks at plain
values and is therefore a non-differentiable constant.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .numerics import tensor as T

__all__ = [
    "SolverConfig",
    "OdeSolution",
    "Dopri5Step",
    "NonConvergenceError",
    "NumericalError",
    "ode_solve",
    "dopri5_step",
    "error_norm",
    "step_scale",
]


class NonConvergenceError(RuntimeError):
    """Raised when an adaptive solve exhausts its step budget."""

    def __init__(self, message: str, last_time: float):
        super().__init__(message)
        self.last_time = last_time


class NumericalError(FloatingPointError):
    pass


METHODS = ("euler", "rk4", "dopri5")


@dataclass(frozen=True)
class SolverConfig:
    method: str = "dopri5"
    step_size: float = 0.05
    rtol: float = 1e-7
    atol: float = 1e-9
    max_steps: int = 100_000
    safety: float = 0.9
    min_scale: float = 0.2
    max_scale: float = 5.0
    initial_step: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown solver method {self.method!r}")
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass
class OdeSolution:
    times: np.ndarray
    states: object  # array or Tensor shaped (len(times), *state.shape)
    n_accepted: int = 0
    n_rejected: int = 0
    n_evals: int = 0


# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_B_LOW = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
_E = tuple(b - bl for b, bl in zip(_B, _B_LOW))
# continuous extension (Hairer & Wanner, DOPRI5 dense output)
_D = (
    -12715105075 / 11282082432, 0.0, 87487479700 / 32700410799,
    -10690763975 / 1880347072, 701980252875 / 199316789632,
    -1453857185 / 822651844, 69997945 / 29380423,
)


def _combo(y, h, coeffs, ks):
    """``y + h * sum(c_i k_i)`` skipping zero coefficients."""
    acc = None
    for c, k in zip(coeffs, ks):
        if c == 0.0:
            continue
        term = k * (h * c)
        acc = term if acc is None else acc + term
    if acc is None:
        return y
    return acc if y is None else y + acc


def error_norm(err, y0, y1, rtol: float, atol: float) -> float:
    """Root-mean-square of ``err / (atol + rtol * max(|y0|, |y1|))``."""
    err, y0, y1 = T.value_of(err), T.value_of(y0), T.value_of(y1)
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def step_scale(err_norm: float, safety: float, min_scale: float, max_scale: float) -> float:
    """Multiplier for the next step given the current weighted error norm."""
    if err_norm == 0.0:
        return max_scale
    return min(max_scale, max(min_scale, safety * err_norm ** -0.2))


class Dopri5Step(NamedTuple):
    y_new: object
    error: object
    err_norm: float
    h_next: float
    accepted: bool
    k: tuple


def dopri5_step(field: Callable, t: float, y, h: float, *, rtol: float = 1e-7,
                atol: float = 1e-9, safety: float = 0.9, min_scale: float = 0.2,
                max_scale: float = 5.0, f0=None) -> Dopri5Step:
    """One Dormand-Prince trial step of size ``h`` from ``(t, y)``.

    ``f0`` may carry ``field(t, y)`` from the previous step (first-same-as-last).
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    k = [field(t, y) if f0 is None else f0]
    for i in range(1, 7):
        yi = _combo(y, h, _A[i], k)
        k.append(field(t + _C[i] * h, yi))
    # the last stage is evaluated at the 5th-order solution
    y_new = yi
    err = _combo(None, h, _E, k)
    norm = error_norm(err, y, y_new, rtol, atol)
    h_next = h * step_scale(norm, safety, min_scale, max_scale)
    return Dopri5Step(y_new, err, norm, h_next, norm <= 1.0, tuple(k))


def _dense(y0, y1, k, h, theta):
    """Fourth-order continuous extension at ``t0 + theta * h``."""
    r2 = y1 - y0
    r3 = k[0] * h - r2
    r4 = r2 - k[6] * h - r3
    r5 = _combo(None, h, _D, k)
    th1 = 1.0 - theta
    return y0 + (r2 + (r3 + (r4 + r5 * th1) * theta) * th1) * theta


def _check_finite(y, t):
    if not np.all(np.isfinite(T.value_of(y))):
        raise NumericalError(f"non-finite ODE state at t={t!r}")


def _fixed_step(field, t, y, h, method):
    if method == "euler":
        return y + field(t, y) * h, 1
    k1 = field(t, y)
    k2 = field(t + 0.5 * h, y + k1 * (0.5 * h))
    k3 = field(t + 0.5 * h, y + k2 * (0.5 * h))
    k4 = field(t + h, y + k3 * h)
    return y + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0), 4


def ode_solve(field: Callable, y0, times: Sequence[float], config: SolverConfig | None = None
              ) -> OdeSolution:
    """Solve ``dy/dt = field(t, y)`` from ``y(times[0]) = y0``; report at ``times``.

    Fixed-step methods split every gap between consecutive query times into
    ``ceil(gap / step_size)`` equal steps, so they land exactly on the query
    times.  ``dopri5`` steps freely and reports through dense output.
    """
    config = config or SolverConfig()
    times = np.asarray(times, dtype=np.float64)
    if times.ndim != 1 or len(times) == 0:
        raise ValueError("query times must be a non-empty 1-D sequence")
    if np.any(np.diff(times) <= 0):
        raise ValueError("query times must be strictly increasing")
    if not isinstance(y0, T.Tensor):
        y0 = np.asarray(y0, dtype=np.float64)
    if len(times) == 1:
        return OdeSolution(times, T.stack([y0]))
    if config.method == "dopri5":
        return _solve_dopri5(field, y0, times, config)

    out = [y0]
    y = y0
    evals = steps = 0
    for t0, t1 in zip(times[:-1], times[1:]):
        gap = t1 - t0
        n = max(1, math.ceil(gap / config.step_size - 1e-9))
        h = gap / n
        for i in range(n):
            if steps >= config.max_steps:
                raise NonConvergenceError("fixed-step solve exceeded max_steps", t0 + i * h)
            y, ne = _fixed_step(field, t0 + i * h, y, h, config.method)
            evals += ne
            steps += 1
        _check_finite(y, t1)
        out.append(y)
    return OdeSolution(times, T.stack(out), steps, 0, evals)


def _solve_dopri5(field, y0, times, cfg: SolverConfig) -> OdeSolution:
    t = float(times[0])
    t_end = float(times[-1])
    y = y0
    h = cfg.initial_step if cfg.initial_step is not None else (t_end - t) / 100.0
    f0 = field(t, y)
    evals = 1
    accepted = rejected = 0
    chunks = [T.stack([y0])]
    qi = 1
    n = len(times)
    extra = (1,) * np.ndim(T.value_of(y0))
    while qi < n:
        if accepted + rejected >= cfg.max_steps:
            raise NonConvergenceError(
                f"dopri5 exceeded max_steps={cfg.max_steps} at t={t}", t)
        last = h >= t_end - t
        if last:
            h = t_end - t
        step = dopri5_step(field, t, y, h, rtol=cfg.rtol, atol=cfg.atol, safety=cfg.safety,
                           min_scale=cfg.min_scale, max_scale=cfg.max_scale, f0=f0)
        evals += 6
        if not math.isfinite(step.err_norm):
            raise NumericalError(f"non-finite error estimate at t={t}")
        if step.accepted:
            accepted += 1
            t_new = t_end if last else t + h
            y_new = step.y_new
            _check_finite(y_new, t_new)
            hi = int(np.searchsorted(times, t_new, side="right"))
            if hi > qi:
                # interior query times via dense output, the step end exactly
                m = hi - qi - (1 if times[hi - 1] == t_new else 0)
                if m > 0:
                    theta = ((times[qi:qi + m] - t) / h).reshape((m,) + extra)
                    chunks.append(_dense(y, y_new, step.k, h, theta))
                if m < hi - qi:
                    chunks.append(T.stack([y_new]))
                qi = hi
            t, y, f0 = t_new, y_new, step.k[6]
        else:
            rejected += 1
        h = step.h_next
        if h <= 1e-14 * max(1.0, abs(t)):
            raise NonConvergenceError(f"dopri5 step size underflow at t={t}", t)
    states = chunks[0] if len(chunks) == 1 else T.concat(chunks, axis=0)
    return OdeSolution(times, states, accepted, rejected, evals)
