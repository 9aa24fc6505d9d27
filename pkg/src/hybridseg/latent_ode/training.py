"""ELBO training of the base model on smooth dynamical flows."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..numerics import AdamaxState, Tape, adamax_step, backward, clip_grad_norm, mlp_forward
from ..numerics import tensor as T
from ..ode import SolverConfig, ode_solve
from .model import LOG_2PI, LatentOdeModel, encode_batch, kl_standard_normal

log = logging.getLogger(__name__)

__all__ = [
    "TrainConfig",
    "TrainingDivergedError",
    "Batch",
    "make_batch",
    "augment",
    "batch_loss",
    "kl_weight_at",
    "train",
    "as_sequences",
]


class TrainingDivergedError(FloatingPointError):
    def __init__(self, message: str, epoch: int, batch: int):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 256
    lr: float = 0.01
    lr_decay: float = 0.1
    lr_patience: int = 10
    min_lr: float = 1e-4
    kl_anneal_epochs: int = 5
    n_z0_samples: int = 1
    clip_norm: float | None = None
    subsample: tuple | None = None  # (min, max) points kept per trajectory
    truncate: tuple | None = None  # (min, max) leading points cropped
    min_points: int = 2
    time_decimals: int | None = 2
    seed: int = 0
    latent_solver: SolverConfig = field(
        default_factory=lambda: SolverConfig("dopri5", rtol=1e-5, atol=1e-6))
    restore_best: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.kl_anneal_epochs < 0:
            raise ValueError("kl_anneal_epochs must be >= 0")
        if self.n_z0_samples < 1:
            raise ValueError("n_z0_samples must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


def kl_weight_at(epoch: int, anneal_epochs: int) -> float:
    """Linear KL warm-up: 0 at epoch 0, 1 from ``anneal_epochs`` on."""
    if anneal_epochs <= 0:
        return 1.0
    return min(1.0, epoch / anneal_epochs)


def as_sequences(data) -> list[tuple[np.ndarray, np.ndarray]]:
    """Accept trajectories (visible points are used) or ``(times, values)`` pairs."""
    out = []
    for item in data:
        if hasattr(item, "mask"):
            keep = item.mask == 0
            out.append((item.times[keep], item.values[keep]))
        else:
            t, v = item
            t = np.asarray(t, dtype=np.float64)
            out.append((t, np.asarray(v, dtype=np.float64).reshape(len(t), -1)))
    return out


def augment(times, values, rng: np.random.Generator, subsample=None, truncate=None,
            min_points: int = 2):
    """Start-truncation followed by random sub-sampling of one sequence."""
    n = len(times)
    if truncate is not None:
        lo, hi = truncate
        k = int(rng.integers(lo, hi + 1))
        k = max(0, min(k, n - min_points))
        times, values = times[k:], values[k:]
        n = len(times)
    if subsample is not None:
        lo, hi = subsample
        k = int(rng.integers(lo, hi + 1))
        k = max(min(min_points, n), min(k, n))
        idx = np.sort(rng.choice(n, size=k, replace=False))
        times, values = times[idx], values[idx]
    return times, values


@dataclass
class Batch:
    enc_values: np.ndarray  # (B, R, D) reversed, padded
    enc_gaps: np.ndarray  # (B, R)
    lengths: np.ndarray  # (B,)
    union_times: np.ndarray  # (U,)
    counts: np.ndarray  # (U, B) observations of row b at union time u
    sums: np.ndarray  # (U, B, D) sum of those observations
    sq_sums: np.ndarray  # (B,) sum of squared observations


def make_batch(seqs: Sequence[tuple[np.ndarray, np.ndarray]], time_decimals: int | None = 2
               ) -> Batch:
    """Pad sequences for the encoder and pool decoder query times over the batch.

    Decoder times are re-based to each sequence's first observation and, if
    ``time_decimals`` is set, rounded so the union stays small.
    """
    B = len(seqs)
    D = seqs[0][1].shape[1]
    lengths = np.array([len(t) for t, _ in seqs])
    R = int(lengths.max())
    enc_values = np.zeros((B, R, D))
    enc_gaps = np.zeros((B, R))
    rebased = []
    for b, (t, v) in enumerate(seqs):
        n = len(t)
        enc_values[b, :n] = v[::-1]
        enc_gaps[b, 1:n] = np.diff(t[::-1])
        tb = t - t[0]
        if time_decimals is not None:
            tb = np.round(tb, time_decimals)
        rebased.append(tb)
    union = np.unique(np.concatenate(rebased))
    counts = np.zeros((len(union), B))
    sums = np.zeros((len(union), B, D))
    for b, (tb, (_, v)) in enumerate(zip(rebased, seqs)):
        idx = np.searchsorted(union, tb)
        np.add.at(counts[:, b], idx, 1.0)
        np.add.at(sums[:, b], idx, v)
    sq_sums = np.array([float(np.sum(v * v)) for _, v in seqs])
    return Batch(enc_values, enc_gaps, lengths, union, counts, sums, sq_sums)


def batch_loss(model: LatentOdeModel, p, batch: Batch, kl_weight: float,
               rng: np.random.Generator, n_samples: int = 1,
               solver: SolverConfig | None = None):
    """Mean negative ELBO over the batch rows; returns ``(loss, mean_rec, mean_kl)``."""
    cfg = model.config
    solver = solver or cfg.latent_solver
    mean, std = encode_batch(model, batch.enc_values, batch.enc_gaps, batch.lengths, p)
    B, L, D = len(batch.lengths), cfg.latent_dim, cfg.data_dim
    S = n_samples
    eps = rng.standard_normal((S, B, L))
    z = T.reshape(mean + std * eps, (S * B, L))
    lf = model.latent_field(p)
    sol = ode_solve(lambda t, y: mlp_forward(lf, y), z, batch.union_times, solver)
    pred = T.reshape(mlp_forward(model.decoder(p), sol.states), (len(batch.union_times), S, B, D))
    counts = batch.counts[:, None, :, None]
    sums = batch.sums[:, None, :, :]
    # sum_j (pred - x_j)^2 per union time = c*pred^2 - 2*pred*sum_j x_j + sum_j x_j^2
    quad = T.sum(T.sum(counts * T.square(pred) - 2.0 * pred * sums, axis=3), axis=0)  # (S, B)
    var = cfg.obs_variance
    n_obs = batch.lengths * D
    rec = (quad + batch.sq_sums) * (-0.5 / var) - 0.5 * n_obs * (LOG_2PI + math.log(var))
    rec = T.mean(rec, axis=0)  # (B,)
    kl = kl_standard_normal(mean, std)  # (B,)
    loss = -T.mean(rec - kl * kl_weight)
    return loss, float(np.mean(T.value_of(rec))), float(np.mean(T.value_of(kl)))


def _evaluate(model, seqs, config: TrainConfig, rng) -> float:
    total = 0.0
    for i in range(0, len(seqs), config.batch_size):
        chunk = seqs[i:i + config.batch_size]
        batch = make_batch(chunk, config.time_decimals)
        loss, _, _ = batch_loss(model, None, batch, 1.0, rng, 1, config.latent_solver)
        total += float(loss) * len(chunk)
    return total / len(seqs)


def train(model: LatentOdeModel, data, config: TrainConfig, val_data=None,
          callback: Callable | None = None):
    """Fit ``model`` by Adamax on the negative ELBO.

    Returns ``(model, history)``; ``history`` holds one record per epoch with
    train/validation negative ELBO, KL weight and learning rate.  The input
    model is not modified.
    """
    seqs = as_sequences(data)
    if not seqs:
        raise ValueError("empty training set")
    val_seqs = as_sequences(val_data) if val_data is not None else None
    history: list[dict] = []
    if config.epochs == 0:
        return model, history
    rng = np.random.default_rng(config.seed)
    params = {k: v.copy() for k, v in model.params.items()}
    work = LatentOdeModel(model.config, params, model.seed)
    opt = AdamaxState(lr=config.lr)
    best, best_params, since_best = math.inf, None, 0
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        w = kl_weight_at(epoch, config.kl_anneal_epochs)
        order = rng.permutation(len(seqs))
        losses = []
        for bi, start in enumerate(range(0, len(seqs), config.batch_size)):
            chunk = [augment(*seqs[j], rng, config.subsample, config.truncate, config.min_points)
                     for j in order[start:start + config.batch_size]]
            batch = make_batch(chunk, config.time_decimals)
            tape = Tape()
            p = {k: tape.watch(v, k) for k, v in work.params.items()}
            loss, _, _ = batch_loss(work, p, batch, w, rng, config.n_z0_samples,
                                    config.latent_solver)
            lv = float(loss.value)
            if not math.isfinite(lv):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {bi}", epoch, bi)
            grads = backward(tape, loss)
            if config.clip_norm is not None:
                grads = clip_grad_norm(grads, config.clip_norm)
            work.params, opt = adamax_step(opt, work.params, grads)
            losses.append(lv * len(chunk))
        train_loss = float(np.sum(losses) / len(seqs))
        if val_seqs:
            val_loss = _evaluate(work, val_seqs, config, np.random.default_rng(config.seed + 1))
        else:
            val_loss = train_loss
        record = {"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss,
                  "kl_weight": w, "lr": opt.lr, "seconds": time.perf_counter() - t0}
        history.append(record)
        log.info("epoch %d train %.4f val %.4f kl_w %.2f lr %.1e (%.1fs)", epoch, train_loss,
                 val_loss, w, opt.lr, record["seconds"])
        # the plateau schedule only starts once the KL weight is fully on
        if w >= 1.0 and val_loss < best:
            best, since_best = val_loss, 0
            best_params = {k: v.copy() for k, v in work.params.items()}
            record["improved"] = True
        elif w >= 1.0:
            since_best += 1
            if since_best >= config.lr_patience and opt.lr > config.min_lr:
                opt.lr = max(config.min_lr, opt.lr * config.lr_decay)
                since_best = 0
        if callback is not None:
            callback(epoch, work, record)
    if config.restore_best and best_params is not None:
        work = LatentOdeModel(model.config, best_params, model.seed)
    return work, history
