"""Latent ODE base model: GRU-ODE encoder, latent Neural ODE, decoder."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..numerics import GruParams, MlpParams, init_gru, init_mlp, mlp_forward, gru_cell_step
from ..numerics import tensor as T
from ..ode import SolverConfig, ode_solve

__all__ = [
    "ModelConfig",
    "LatentOdeModel",
    "Posterior",
    "sine_config",
    "lotka_volterra_config",
    "encode",
    "encode_batch",
    "encode_prefixes",
    "decode",
    "decode_batch",
    "gaussian_log_likelihood",
    "kl_standard_normal",
]

LOG_2PI = math.log(2.0 * math.pi)
SIGMA_FLOOR = 1e-6


@dataclass(frozen=True)
class ModelConfig:
    data_dim: int = 1
    latent_dim: int = 5
    enc_hidden: int = 10
    gru_units: int | None = 100
    enc_field_hidden: tuple = (100, 100)
    latent_field_hidden: tuple = (100, 100)
    decoder_hidden: tuple = (100, 100)
    obs_variance: float = 1.0
    encoder_substeps: int = 5
    latent_solver: SolverConfig = field(
        default_factory=lambda: SolverConfig("dopri5", rtol=1e-5, atol=1e-6))

    def __post_init__(self):
        if self.latent_dim >= self.enc_hidden:
            raise ValueError("encoder hidden dimension must exceed the latent dimension")
        if self.obs_variance <= 0:
            raise ValueError("obs_variance must be positive")
        if self.encoder_substeps < 1:
            raise ValueError("encoder_substeps must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("enc_field_hidden", "latent_field_hidden", "decoder_hidden"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        for key in ("enc_field_hidden", "latent_field_hidden", "decoder_hidden"):
            if key in d:
                d[key] = tuple(d[key])
        if isinstance(d.get("latent_solver"), dict):
            d["latent_solver"] = SolverConfig(**d["latent_solver"])
        return cls(**d)


def sine_config(**overrides) -> ModelConfig:
    """Sine-wave architecture: latent 5, encoder hidden 10, 100-unit networks, variance 1."""
    return replace(ModelConfig(), **overrides)


def lotka_volterra_config(**overrides) -> ModelConfig:
    """Lotka-Volterra architecture: latent 8, hidden 16, 3x100 tanh fields, variance 0.01."""
    base = ModelConfig(
        data_dim=2, latent_dim=8, enc_hidden=16, gru_units=100,
        enc_field_hidden=(100, 100, 100), latent_field_hidden=(100, 100, 100),
        decoder_hidden=(100, 100), obs_variance=0.01,
        latent_solver=SolverConfig("dopri5", rtol=1e-4, atol=1e-4))
    return replace(base, **overrides)


@dataclass
class Posterior:
    mean: np.ndarray
    std: np.ndarray


def _field_acts(n_hidden: int, hidden: str, out: str = "identity") -> list[str]:
    return [hidden] * n_hidden + [out]


class LatentOdeModel:
    """Parameters (a flat name -> array dict) plus architecture metadata."""

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray], seed: int | None = None):
        self.config = config
        self.params = params
        self.seed = seed

    @classmethod
    def initialize(cls, config: ModelConfig, seed: int = 0) -> "LatentOdeModel":
        rng = np.random.default_rng(seed)
        c = config
        params = {}
        params.update(init_gru(rng, c.data_dim, c.enc_hidden, c.gru_units).named("enc_gru"))
        params.update(init_mlp(rng, [c.enc_hidden, *c.enc_field_hidden, c.enc_hidden],
                               _field_acts(len(c.enc_field_hidden), "tanh")).named("enc_field"))
        params.update(init_mlp(rng, [c.enc_hidden, 2 * c.latent_dim], ["identity"]).named("head"))
        params.update(init_mlp(rng, [c.latent_dim, *c.latent_field_hidden, c.latent_dim],
                               _field_acts(len(c.latent_field_hidden), "tanh")).named("latent_field"))
        params.update(init_mlp(rng, [c.latent_dim, *c.decoder_hidden, c.data_dim],
                               _field_acts(len(c.decoder_hidden), "relu")).named("decoder"))
        return cls(config, params, seed)

    def copy(self) -> "LatentOdeModel":
        return LatentOdeModel(self.config, {k: v.copy() for k, v in self.params.items()}, self.seed)

    def n_parameters(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    # parameter views, over arrays or tape tensors
    def gru(self, p=None) -> GruParams:
        c = self.config
        return GruParams.from_named(p or self.params, "enc_gru", c.data_dim, c.enc_hidden, c.gru_units)

    def enc_field(self, p=None) -> MlpParams:
        return MlpParams.from_named(p or self.params, "enc_field",
                                    _field_acts(len(self.config.enc_field_hidden), "tanh"))

    def head(self, p=None) -> MlpParams:
        return MlpParams.from_named(p or self.params, "head", ["identity"])

    def latent_field(self, p=None) -> MlpParams:
        return MlpParams.from_named(p or self.params, "latent_field",
                                    _field_acts(len(self.config.latent_field_hidden), "tanh"))

    def decoder(self, p=None) -> MlpParams:
        return MlpParams.from_named(p or self.params, "decoder",
                                    _field_acts(len(self.config.decoder_hidden), "relu"))


def _check_times(times):
    times = np.asarray(times, dtype=np.float64)
    if times.ndim != 1 or len(times) == 0:
        raise ValueError("need at least one observation time")
    if np.any(np.diff(times) <= 0):
        raise ValueError("observation times must be strictly increasing")
    return times


def _split_head(model, p, h):
    out = mlp_forward(model.head(p), h)
    L = model.config.latent_dim
    mean = out[..., :L]
    log_std = T.clip_min(out[..., L:], math.log(SIGMA_FLOOR))
    return mean, T.exp(log_std)


def _euler_evolve(field_params, h, dt, substeps):
    """Evolve the encoder hidden state over a (signed) time gap with Euler substeps."""
    step = dt / substeps
    for _ in range(substeps):
        h = h + mlp_forward(field_params, h) * step
    return h


def encode(model: LatentOdeModel, values, times, p=None) -> Posterior:
    """Posterior over the latent initial state of one observed sequence.

    The hidden state starts at zero at the last observation and runs backwards
    in time: GRU update at each observation, Euler-integrated encoder ODE
    across every gap.
    """
    times = _check_times(times)
    values = np.asarray(values, dtype=np.float64).reshape(len(times), -1)
    gru = model.gru(p)
    fld = model.enc_field(p)
    k = model.config.encoder_substeps
    h = np.zeros(model.config.enc_hidden)
    n = len(times)
    for i in range(n - 1, -1, -1):
        if i < n - 1:
            h = _euler_evolve(fld, h, times[i] - times[i + 1], k)
        h = gru_cell_step(gru, h, values[i])
    mean, std = _split_head(model, p, h)
    return Posterior(mean, std)


def encode_prefixes(model: LatentOdeModel, values, times, starts) -> dict[int, Posterior]:
    """Posteriors of ``values[s:]`` for every ``s`` in ``starts`` from one backward pass.

    The reverse-time encoder consumes observations last-to-first, so all
    suffixes that share an end point share the same computation.
    """
    times = _check_times(times)
    values = np.asarray(values, dtype=np.float64).reshape(len(times), -1)
    wanted = set(int(s) for s in starts)
    gru, fld = model.gru(), model.enc_field()
    k = model.config.encoder_substeps
    h = np.zeros(model.config.enc_hidden)
    n = len(times)
    out = {}
    for i in range(n - 1, -1, -1):
        if i < n - 1:
            h = _euler_evolve(fld, h, times[i] - times[i + 1], k)
        h = gru_cell_step(gru, h, values[i])
        if i in wanted:
            mean, std = _split_head(model, None, h)
            out[i] = Posterior(mean, std)
    return out


def encode_batch(model: LatentOdeModel, values, gaps, lengths, p=None):
    """Batched encoder over reverse-ordered, padded sequences.

    ``values[b, r]`` is the r-th observation of row ``b`` counted from its end,
    ``gaps[b, r]`` the signed time step from observation ``r - 1`` to ``r``
    (zero for ``r == 0`` and for padding).  Rows advance independently, so
    each row reproduces :func:`encode` on its own sequence.
    """
    values = np.asarray(values, dtype=np.float64)
    B, R = values.shape[:2]
    lengths = np.asarray(lengths)
    gru, fld = model.gru(p), model.enc_field(p)
    k = model.config.encoder_substeps
    h = np.zeros((B, model.config.enc_hidden))
    for r in range(R):
        active = (lengths > r)[:, None]
        if r > 0:
            h = _euler_evolve(fld, h, gaps[:, r:r + 1], k)
        h = T.where(active, gru_cell_step(gru, h, values[:, r]), h)
    return _split_head(model, p, h)


def decode(model: LatentOdeModel, z0, times, solver: SolverConfig | None = None, p=None):
    """Predicted means ``(len(times), data_dim)`` (or ``(len(times), B, data_dim)`` for a
    batch of initial states) from latent initial state(s) placed at ``times[0]``."""
    times = _check_times(times)
    solver = solver or model.config.latent_solver
    lf = model.latent_field(p)
    sol = ode_solve(lambda t, z: mlp_forward(lf, z), z0, times, solver)
    return mlp_forward(model.decoder(p), sol.states)


decode_batch = decode


def gaussian_log_likelihood(x, mean, variance: float, axis=None):
    """Sum of ``log N(x | mean, variance)`` over ``axis`` (all axes by default)."""
    diff = x - mean
    n = np.size(T.value_of(diff)) if axis is None else np.prod(
        [np.shape(T.value_of(diff))[a] for a in np.atleast_1d(axis)])
    sq = T.sum(T.square(diff), axis)
    return sq * (-0.5 / variance) - 0.5 * n * (LOG_2PI + math.log(variance))


def kl_standard_normal(mean, std, axis=-1):
    """``KL[N(mean, std^2) || N(0, I)]`` summed over ``axis``."""
    var = T.square(std)
    return T.sum(T.square(mean) + var - 1.0 - T.log(var), axis) * 0.5
