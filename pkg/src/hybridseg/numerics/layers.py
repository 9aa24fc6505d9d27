"""Dense layers: multilayer perceptron and GRU cell.

Parameters are plain containers of arrays (or tape tensors when gradients are
needed); the forward functions are written once against both.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T

ACTIVATIONS = ("tanh", "relu", "identity")

__all__ = [
    "ACTIVATIONS",
    "MlpParams",
    "GruParams",
    "init_mlp",
    "init_gru",
    "mlp_forward",
    "gru_cell_step",
]


def _activate(x, kind: str):
    if kind == "tanh":
        return T.tanh(x)
    if kind == "relu":
        return T.relu(x)
    if kind == "identity":
        return x
    raise ValueError(f"unknown activation {kind!r}")


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class MlpParams:
    """Weights ``(in, out)`` and biases ``(out,)`` per layer."""

    weights: list
    biases: list
    activations: list[str]

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ValueError("weights, biases and activations must have equal length")
        for kind in self.activations:
            if kind not in ACTIVATIONS:
                raise ValueError(f"unknown activation {kind!r}")
        for i in range(len(self.weights) - 1):
            if T.value_of(self.weights[i]).shape[1] != T.value_of(self.weights[i + 1]).shape[0]:
                raise ValueError(f"layer {i} output does not chain into layer {i + 1}")

    @property
    def in_dim(self) -> int:
        return T.value_of(self.weights[0]).shape[0]

    @property
    def out_dim(self) -> int:
        return T.value_of(self.weights[-1]).shape[1]

    def named(self, prefix: str) -> dict:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}.{i}.weight"] = w
            out[f"{prefix}.{i}.bias"] = b
        return out

    @classmethod
    def from_named(cls, params: dict, prefix: str, activations: Sequence[str]) -> "MlpParams":
        n = len(activations)
        return cls(
            [params[f"{prefix}.{i}.weight"] for i in range(n)],
            [params[f"{prefix}.{i}.bias"] for i in range(n)],
            list(activations),
        )


def init_mlp(
    rng: np.random.Generator,
    sizes: Sequence[int],
    activations: Sequence[str],
) -> MlpParams:
    """Fan-in uniform weights, zero biases; ``sizes`` lists every layer width."""
    if len(sizes) - 1 != len(activations):
        raise ValueError("need one activation per layer")
    ws, bs = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        ws.append(_uniform(rng, fan_in, (fan_in, fan_out)))
        bs.append(np.zeros(fan_out))
    return MlpParams(ws, bs, list(activations))


def mlp_forward(params: MlpParams, x):
    """Apply ``act(x @ W + b)`` layer by layer over the last axis of ``x``."""
    if T.value_of(x).shape[-1] != params.in_dim:
        raise ValueError(
            f"input last dimension {T.value_of(x).shape[-1]} != layer input size {params.in_dim}")
    h = x
    for w, b, kind in zip(params.weights, params.biases, params.activations):
        h = _activate(h @ w + b, kind)
    return h


@dataclass
class GruParams:
    """Gate parameters of a GRU cell.

    Each gate (``update``, ``reset``, ``candidate``) acts on ``[input, hidden]``
    (the candidate on ``[input, reset * hidden]``).  With ``units is None``
    a gate is one affine map; otherwise it is an affine-tanh-affine network
    with ``units`` hidden neurons.
    """

    input_size: int
    hidden_size: int
    gates: dict = field(default_factory=dict)  # gate -> MlpParams
    units: int | None = None

    GATES = ("update", "reset", "candidate")

    def __post_init__(self):
        for name in self.GATES:
            mlp = self.gates[name]
            if mlp.in_dim != self.input_size + self.hidden_size:
                raise ValueError(f"{name} gate input size mismatch")
            if mlp.out_dim != self.hidden_size:
                raise ValueError(f"{name} gate output size mismatch")

    def named(self, prefix: str) -> dict:
        out = {}
        for name in self.GATES:
            out.update(self.gates[name].named(f"{prefix}.{name}"))
        return out

    @staticmethod
    def gate_activations(units: int | None) -> list[str]:
        return ["identity"] if units is None else ["tanh", "identity"]

    @classmethod
    def from_named(cls, params: dict, prefix: str, input_size: int, hidden_size: int,
                   units: int | None = None) -> "GruParams":
        acts = cls.gate_activations(units)
        gates = {name: MlpParams.from_named(params, f"{prefix}.{name}", acts) for name in cls.GATES}
        return cls(input_size, hidden_size, gates, units)


def init_gru(rng: np.random.Generator, input_size: int, hidden_size: int,
             units: int | None = None) -> GruParams:
    fan = input_size + hidden_size
    sizes = [fan, hidden_size] if units is None else [fan, units, hidden_size]
    acts = GruParams.gate_activations(units)
    gates = {name: init_mlp(rng, sizes, acts) for name in GruParams.GATES}
    return GruParams(input_size, hidden_size, gates, units)


def gru_cell_step(params: GruParams, hidden, x):
    """One GRU update.

    ``u = sigmoid(G_u[x, h])``, ``r = sigmoid(G_r[x, h])``,
    ``n = tanh(G_n[x, r*h])`` and ``h' = (1 - u) * n + u * h``.
    Works on single vectors or on row batches.
    """
    hv, xv = T.value_of(hidden), T.value_of(x)
    if hv.shape[-1] != params.hidden_size:
        raise ValueError(f"hidden size {hv.shape[-1]} != {params.hidden_size}")
    if xv.shape[-1] != params.input_size:
        raise ValueError(f"input size {xv.shape[-1]} != {params.input_size}")
    xh = T.concat([x, hidden], axis=-1)
    u = T.sigmoid(mlp_forward(params.gates["update"], xh))
    r = T.sigmoid(mlp_forward(params.gates["reset"], xh))
    n = T.tanh(mlp_forward(params.gates["candidate"], T.concat([x, r * hidden], axis=-1)))
    return (1.0 - u) * n + u * hidden
