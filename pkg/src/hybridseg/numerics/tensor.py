"""Tape-based reverse-mode automatic differentiation over numpy arrays.

A :class:`Tape` records every primitive applied to a :class:`Tensor` in
execution order.  Plain ``numpy.ndarray`` inputs are treated as constants, so
the same model code runs untaped (pure numpy, fast) or taped (differentiable)
depending only on whether its parameters are arrays or tensors.

Example
-------
>>> tape = Tape()
>>> x = tape.watch(np.array(3.0), "x")
>>> y = x * x
>>> backward(tape, y)["x"]
array(6.)
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tape",
    "Tensor",
    "backward",
    "value_of",
    "is_tensor",
    "exp",
    "log",
    "tanh",
    "sigmoid",
    "relu",
    "square",
    "sqrt",
    "sum",
    "mean",
    "concat",
    "stack",
    "where",
    "clip_min",
    "logsumexp",
]


class Tape:
    """Ordered record of primitive operations.

    Node ``i`` stores the ids of its inputs (``None`` for constants) and a
    vector-Jacobian closure.  Inputs always precede outputs, so a single
    reverse sweep over the node list is a valid backward pass.
    """

    def __init__(self):
        self.parents: list[tuple] = []
        self.vjps: list[Callable | None] = []
        self.leaves: dict[str, int] = {}
        self.leaf_shapes: dict[int, tuple] = {}

    def __len__(self):
        return len(self.vjps)

    def watch(self, value, name: str | None = None) -> "Tensor":
        """Register ``value`` as a differentiable leaf."""
        value = np.asarray(value, dtype=np.float64)
        node = len(self.vjps)
        self.parents.append(())
        self.vjps.append(None)
        if name is None:
            name = f"leaf{node}"
        if name in self.leaves:
            raise ValueError(f"duplicate leaf name {name!r}")
        self.leaves[name] = node
        self.leaf_shapes[node] = value.shape
        return Tensor(value, self, node)

    def record(self, value, parents: tuple, vjp: Callable) -> "Tensor":
        node = len(self.vjps)
        self.parents.append(parents)
        self.vjps.append(vjp)
        return Tensor(value, self, node)


class Tensor:
    """A float64 array living on a :class:`Tape`."""

    __slots__ = ("value", "tape", "node")
    # keep numpy from swallowing mixed ndarray/Tensor expressions
    __array_ufunc__ = None

    def __init__(self, value, tape: Tape, node: int):
        self.value = value
        self.tape = tape
        self.node = node

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        return f"Tensor(node={self.node}, value={self.value!r})"

    __add__ = lambda a, b: add(a, b)  # noqa: E731
    __radd__ = lambda a, b: add(b, a)  # noqa: E731
    __sub__ = lambda a, b: sub(a, b)  # noqa: E731
    __rsub__ = lambda a, b: sub(b, a)  # noqa: E731
    __mul__ = lambda a, b: mul(a, b)  # noqa: E731
    __rmul__ = lambda a, b: mul(b, a)  # noqa: E731
    __truediv__ = lambda a, b: div(a, b)  # noqa: E731
    __rtruediv__ = lambda a, b: div(b, a)  # noqa: E731
    __matmul__ = lambda a, b: matmul(a, b)  # noqa: E731
    __rmatmul__ = lambda a, b: matmul(b, a)  # noqa: E731
    __neg__ = lambda a: neg(a)  # noqa: E731
    __pow__ = lambda a, p: power(a, p)  # noqa: E731
    __getitem__ = lambda a, idx: getitem(a, idx)  # noqa: E731

    @property
    def T(self):
        return transpose(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None):
        return sum(self, axis)


def is_tensor(x) -> bool:
    return isinstance(x, Tensor)


def value_of(x):
    """Underlying array of a tensor, or ``x`` itself."""
    return x.value if isinstance(x, Tensor) else x


def _tape_of(*xs) -> Tape | None:
    tape = None
    for x in xs:
        if isinstance(x, Tensor):
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise ValueError("tensors from different tapes cannot be combined")
    return tape


def _node(x):
    return x.node if isinstance(x, Tensor) else None


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    ndiff = grad.ndim - len(shape)
    if ndiff > 0:
        grad = grad.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------- binary ops


def add(a, b):
    tape = _tape_of(a, b)
    av, bv = value_of(a), value_of(b)
    out = av + bv
    if tape is None:
        return out
    sa, sb = np.shape(av), np.shape(bv)

    def vjp(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return tape.record(out, (_node(a), _node(b)), vjp)


def sub(a, b):
    tape = _tape_of(a, b)
    av, bv = value_of(a), value_of(b)
    out = av - bv
    if tape is None:
        return out
    sa, sb = np.shape(av), np.shape(bv)

    def vjp(g):
        return _unbroadcast(g, sa), _unbroadcast(-g, sb)

    return tape.record(out, (_node(a), _node(b)), vjp)


def mul(a, b):
    tape = _tape_of(a, b)
    av, bv = value_of(a), value_of(b)
    out = av * bv
    if tape is None:
        return out
    sa, sb = np.shape(av), np.shape(bv)
    need_a, need_b = isinstance(a, Tensor), isinstance(b, Tensor)

    def vjp(g):
        return (
            _unbroadcast(g * bv, sa) if need_a else None,
            _unbroadcast(g * av, sb) if need_b else None,
        )

    return tape.record(out, (_node(a), _node(b)), vjp)


def div(a, b):
    tape = _tape_of(a, b)
    av, bv = value_of(a), value_of(b)
    out = av / bv
    if tape is None:
        return out
    sa, sb = np.shape(av), np.shape(bv)
    need_b = isinstance(b, Tensor)

    def vjp(g):
        ga = _unbroadcast(g / bv, sa)
        gb = _unbroadcast(-g * out / bv, sb) if need_b else None
        return ga, gb

    return tape.record(out, (_node(a), _node(b)), vjp)


def matmul(a, b):
    tape = _tape_of(a, b)
    av, bv = value_of(a), value_of(b)
    out = av @ bv
    if tape is None:
        return out
    need_a, need_b = isinstance(a, Tensor), isinstance(b, Tensor)
    if bv.ndim == 2 and av.ndim >= 2:
        def vjp(g):
            ga = g @ bv.T if need_a else None
            gb = None
            if need_b:
                gb = av.reshape(-1, av.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            return ga, gb
    elif av.ndim == 1 and bv.ndim == 2:
        def vjp(g):
            return (g @ bv.T if need_a else None,
                    np.outer(av, g) if need_b else None)
    elif av.ndim == 2 and bv.ndim == 1:
        def vjp(g):
            return (np.outer(g, bv) if need_a else None,
                    av.T @ g if need_b else None)
    else:
        raise ValueError("matmul supports (..., n) @ (n, m) and matrix-vector operands")

    return tape.record(out, (_node(a), _node(b)), vjp)


def power(a, p):
    if isinstance(p, Tensor):
        raise TypeError("tensor exponents are not supported")
    tape = _tape_of(a)
    av = value_of(a)
    out = av ** p
    if tape is None:
        return out

    def vjp(g):
        return (g * p * av ** (p - 1),)

    return tape.record(out, (a.node,), vjp)


# ----------------------------------------------------------------- unary ops


def neg(a):
    if not isinstance(a, Tensor):
        return -a
    return a.tape.record(-a.value, (a.node,), lambda g: (-g,))


def exp(a):
    if not isinstance(a, Tensor):
        return np.exp(a)
    out = np.exp(a.value)
    return a.tape.record(out, (a.node,), lambda g: (g * out,))


def log(a):
    if not isinstance(a, Tensor):
        return np.log(a)
    av = a.value
    return a.tape.record(np.log(av), (a.node,), lambda g: (g / av,))


def tanh(a):
    if not isinstance(a, Tensor):
        return np.tanh(a)
    out = np.tanh(a.value)
    return a.tape.record(out, (a.node,), lambda g: (g * (1.0 - out * out),))


def _sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    if not isinstance(a, Tensor):
        return _sigmoid(np.asarray(a, dtype=np.float64))
    out = _sigmoid(a.value)
    return a.tape.record(out, (a.node,), lambda g: (g * out * (1.0 - out),))


def relu(a):
    if not isinstance(a, Tensor):
        return np.maximum(a, 0.0)
    mask = a.value > 0
    return a.tape.record(a.value * mask, (a.node,), lambda g: (g * mask,))


def square(a):
    if not isinstance(a, Tensor):
        return a * a
    av = a.value
    return a.tape.record(av * av, (a.node,), lambda g: (2.0 * g * av,))


def sqrt(a):
    if not isinstance(a, Tensor):
        return np.sqrt(a)
    out = np.sqrt(a.value)
    return a.tape.record(out, (a.node,), lambda g: (0.5 * g / out,))


def clip_min(a, floor: float):
    """Elementwise ``max(a, floor)``; gradient is zero where clipped."""
    if not isinstance(a, Tensor):
        return np.maximum(a, floor)
    mask = a.value > floor
    out = np.where(mask, a.value, floor)
    return a.tape.record(out, (a.node,), lambda g: (g * mask,))


# ------------------------------------------------------------- shape ops


def sum(a, axis=None):  # noqa: A001 - mirrors numpy naming
    if not isinstance(a, Tensor):
        return np.sum(a, axis=axis)
    shape = a.value.shape
    out = np.sum(a.value, axis=axis)

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return a.tape.record(np.asarray(out), (a.node,), vjp)


def mean(a, axis=None):
    n = value_of(a).size if axis is None else np.prod(
        [value_of(a).shape[i] for i in np.atleast_1d(axis)])
    return sum(a, axis) * (1.0 / n)


def reshape(a, shape):
    if not isinstance(a, Tensor):
        return np.reshape(a, shape)
    old = a.value.shape
    return a.tape.record(a.value.reshape(shape), (a.node,), lambda g: (g.reshape(old),))


def transpose(a):
    if not isinstance(a, Tensor):
        return a.T
    return a.tape.record(a.value.T, (a.node,), lambda g: (g.T,))


def getitem(a, idx):
    if not isinstance(a, Tensor):
        return a[idx]
    shape = a.value.shape

    def vjp(g):
        full = np.zeros(shape)
        np.add.at(full, idx, g)
        return (full,)

    return a.tape.record(a.value[idx], (a.node,), vjp)


def concat(xs: Sequence, axis: int = -1):
    tape = _tape_of(*xs)
    vals = [value_of(x) for x in xs]
    out = np.concatenate(vals, axis=axis)
    if tape is None:
        return out
    splits = np.cumsum([v.shape[axis] for v in vals])[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return tape.record(out, tuple(_node(x) for x in xs), vjp)


def stack(xs: Sequence, axis: int = 0):
    tape = _tape_of(*xs)
    vals = [value_of(x) for x in xs]
    out = np.stack(vals, axis=axis)
    if tape is None:
        return out
    n = len(vals)

    def vjp(g):
        return tuple(np.take(g, i, axis=axis) for i in range(n))

    return tape.record(out, tuple(_node(x) for x in xs), vjp)


def where(cond, a, b):
    """Select from ``a`` where ``cond`` (a constant boolean array) else ``b``."""
    tape = _tape_of(a, b)
    av, bv = value_of(a), value_of(b)
    out = np.where(cond, av, bv)
    if tape is None:
        return out
    sa, sb = np.shape(av), np.shape(bv)

    def vjp(g):
        return _unbroadcast(np.where(cond, g, 0.0), sa), _unbroadcast(np.where(cond, 0.0, g), sb)

    return tape.record(out, (_node(a), _node(b)), vjp)


def logsumexp(a, axis=None):
    av = value_of(a)
    m = np.max(av, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    shifted = np.exp(av - m)
    s = np.sum(shifted, axis=axis, keepdims=True)
    out = np.log(s) + m
    out = out.squeeze(axis) if axis is not None else out.reshape(())
    if not isinstance(a, Tensor):
        return out
    soft = shifted / s

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (g * soft,)

    return a.tape.record(out, (a.node,), vjp)


# ------------------------------------------------------------------ backward


def backward(tape: Tape, output: Tensor) -> dict[str, np.ndarray]:
    """Reverse sweep from a scalar ``output``; returns gradients per named leaf.

    Leaves that do not influence ``output`` receive zero gradients.
    """
    if not isinstance(output, Tensor) or output.tape is not tape:
        raise ValueError("output must be a tensor recorded on this tape")
    if output.value.size != 1:
        raise ValueError(f"backward needs a scalar output, got shape {output.value.shape}")
    grads: list = [None] * (output.node + 1)
    grads[output.node] = np.ones_like(output.value)
    parents, vjps = tape.parents, tape.vjps
    for i in range(output.node, -1, -1):
        g = grads[i]
        if g is None:
            continue
        vjp = vjps[i]
        if vjp is None:
            continue
        for p, pg in zip(parents[i], vjp(g)):
            if p is None or pg is None:
                continue
            if grads[p] is None:
                grads[p] = pg
            else:
                grads[p] = grads[p] + pg
        grads[i] = None
    out = {}
    for name, node in tape.leaves.items():
        g = grads[node] if node < len(grads) else None
        shape = tape.leaf_shapes[node]
        out[name] = np.zeros(shape) if g is None else np.asarray(g, dtype=np.float64).reshape(shape)
    return out

