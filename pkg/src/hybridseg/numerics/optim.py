"""Adamax optimizer and global-norm gradient clipping."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["AdamaxState", "adamax_step", "clip_grad_norm", "global_norm"]


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass
class AdamaxState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    u: dict = field(default_factory=dict)


def adamax_step(state: AdamaxState, params: dict, grads: dict) -> tuple[dict, AdamaxState]:
    """Apply one Adamax update; returns new parameter dict and the (mutated) state.

    ``m <- b1 m + (1 - b1) g``, ``u <- max(b2 u, |g| + eps)`` and
    ``p <- p - lr / (1 - b1^t) * m / u``.  A parameter whose gradient is
    identically zero only has its accumulators decayed; its value is
    returned bit-identical.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient for parameter {name!r}")
        if np.shape(g) != np.shape(params[name]):
            raise ValueError(f"gradient shape mismatch for {name!r}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    lr_t = state.lr / (1.0 - b1 ** state.step)
    new = dict(params)
    for name, g in grads.items():
        m = state.m.get(name)
        u = state.u.get(name)
        if m is None:
            m = np.zeros_like(g)
            u = np.zeros_like(g)
        m = b1 * m + (1.0 - b1) * g
        u = np.maximum(b2 * u, np.abs(g) + state.eps)
        state.m[name] = m
        state.u[name] = u
        if np.any(g != 0.0):
            new[name] = params[name] - lr_t * m / u
    return new, state


def global_norm(grads: dict) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_grad_norm(grads: dict, max_norm: float) -> dict:
    """Rescale all gradients jointly so their global L2 norm is at most ``max_norm``."""
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    norm = global_norm(grads)
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}
