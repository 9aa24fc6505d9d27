"""Hot loops: a compiled extension when available, the pure-Python versions otherwise.

Set ``HYBRIDSEG_PURE_PYTHON=1`` to force the fallback.  ``BACKEND`` names the
implementation in use.
"""
import os

from . import _fallback
from ._fallback import pelt_core

_impl = _fallback
BACKEND = "python"
if os.environ.get("HYBRIDSEG_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _fallback

pelt_table = _impl.pelt_table
known_k_table = _impl.known_k_table
rbf_cost_matrix = _impl.rbf_cost_matrix
_lv_solve = _impl.lv_solve


def lv_solve(params, y0, times, rtol=1e-8, atol=1e-8, max_steps=100_000):
    """Lotka-Volterra states ``(len(times), 2)`` and the number of attempted steps."""
    import numpy as np

    from ..ode import NonConvergenceError, NumericalError

    try:
        states, steps = _lv_solve(tuple(float(p) for p in params), np.asarray(y0, dtype=np.float64),
                                  np.asarray(times, dtype=np.float64), rtol, atol, max_steps)
    except RuntimeError as exc:
        if len(exc.args) != 2:
            raise
        status, t = exc.args
        if status == 1:
            raise NonConvergenceError(f"Lotka-Volterra solve exceeded max_steps at t={t}", t) from None
        if status == 3:
            raise NonConvergenceError(f"Lotka-Volterra step size underflow at t={t}", t) from None
        raise NumericalError(f"non-finite Lotka-Volterra state at t={t}") from None
    return np.asarray(states), steps


__all__ = ["BACKEND", "pelt_core", "pelt_table", "known_k_table", "rbf_cost_matrix", "lv_solve"]
