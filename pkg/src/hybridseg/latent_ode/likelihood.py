"""ELBO and importance-sampled marginal likelihood of an observed sequence."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .model import (
    LOG_2PI,
    LatentOdeModel,
    Posterior,
    decode,
    encode,
    gaussian_log_likelihood,
    kl_standard_normal,
)

__all__ = [
    "MarginalLikelihoodConfig",
    "elbo",
    "importance_log_weights",
    "marginal_log_likelihood",
    "log_mean_exp",
    "standard_error_of_log_mean",
]


@dataclass(frozen=True)
class MarginalLikelihoodConfig:
    n_samples: int = 100
    obs_variance: float | None = None  # None: use the model's training variance
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.obs_variance is not None and self.obs_variance <= 0:
            raise ValueError("obs_variance must be positive")


def _variance(model: LatentOdeModel, config: MarginalLikelihoodConfig) -> float:
    var = model.config.obs_variance
    if config.obs_variance is not None and config.obs_variance != var:
        raise ValueError(
            f"marginal likelihood variance {config.obs_variance} differs from the "
            f"training variance {var}")
    return var


def _log_normal_diag(z, mean, std):
    return np.sum(-0.5 * ((z - mean) / std) ** 2 - np.log(std) - 0.5 * LOG_2PI, axis=-1)


def importance_log_weights(model: LatentOdeModel, values, times, n_samples: int,
                           rng: np.random.Generator, posterior: Posterior | None = None,
                           variance: float | None = None, time_decimals: int | None = None
                           ) -> np.ndarray:
    """``log p(x|z_j) + log p(z_j) - log q(z_j|x)`` for ``z_j ~ q``, shape ``(n_samples,)``.

    With ``time_decimals`` set, decoder query times are re-based to the first
    observation and rounded; observations sharing a rounded time share one
    decoded prediction.
    """
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64).reshape(len(times), -1)
    if posterior is None:
        posterior = encode(model, values, times)
    variance = model.config.obs_variance if variance is None else variance
    L = model.config.latent_dim
    eps = rng.standard_normal((n_samples, L))
    z = posterior.mean + posterior.std * eps
    if time_decimals is None:
        pred = decode(model, z, times)  # (n, M, D)
    else:
        query, inverse = np.unique(np.round(times - times[0], time_decimals), return_inverse=True)
        pred = decode(model, z, query)[inverse]
    log_lik = gaussian_log_likelihood(values[:, None, :], pred, variance, axis=(0, 2))
    log_prior = _log_normal_diag(z, 0.0, 1.0)
    log_q = _log_normal_diag(z, posterior.mean, posterior.std)
    return log_lik + log_prior - log_q


def log_mean_exp(log_w: np.ndarray) -> float:
    return float(logsumexp(log_w) - math.log(len(log_w)))


def standard_error_of_log_mean(log_w: np.ndarray) -> float:
    """Delta-method standard error of ``log(mean(exp(log_w)))``."""
    w = np.exp(log_w - np.max(log_w))
    if len(w) < 2:
        return float("inf")
    return float(np.std(w, ddof=1) / (math.sqrt(len(w)) * np.mean(w)))


def marginal_log_likelihood(model: LatentOdeModel, values, times,
                            config: MarginalLikelihoodConfig | None = None,
                            rng: np.random.Generator | None = None,
                            posterior: Posterior | None = None) -> float:
    """Importance-sampled ``log p(x)`` with the encoder posterior as proposal."""
    config = config or MarginalLikelihoodConfig()
    if config.n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    variance = _variance(model, config)
    if rng is None:
        rng = np.random.default_rng(config.seed)
    log_w = importance_log_weights(model, values, times, config.n_samples, rng,
                                   posterior=posterior, variance=variance)
    return log_mean_exp(log_w)


def elbo(model: LatentOdeModel, values, times, kl_weight: float,
         rng: np.random.Generator, n_samples: int = 1) -> float:
    """Reparameterized Monte Carlo ELBO of one sequence (no gradients)."""
    if not 0.0 <= kl_weight <= 1.0:
        raise ValueError("kl_weight must lie in [0, 1]")
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64).reshape(len(times), -1)
    post = encode(model, values, times)
    eps = rng.standard_normal((n_samples, model.config.latent_dim))
    z = post.mean + post.std * eps
    pred = decode(model, z, times)
    rec = gaussian_log_likelihood(values[:, None, :], pred, model.config.obs_variance, axis=(0, 2))
    kl = kl_standard_normal(post.mean, post.std)
    return float(np.mean(rec) - kl_weight * kl)
