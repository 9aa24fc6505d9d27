"""Latent ODE base model, training and marginal likelihood."""
from .checkpoint import CheckpointError, load_checkpoint, read_checkpoint_manifest, save_checkpoint
from .likelihood import (
    MarginalLikelihoodConfig,
    elbo,
    importance_log_weights,
    log_mean_exp,
    marginal_log_likelihood,
    standard_error_of_log_mean,
)
from .model import (
    LatentOdeModel,
    ModelConfig,
    Posterior,
    decode,
    decode_batch,
    encode,
    encode_batch,
    encode_prefixes,
    gaussian_log_likelihood,
    kl_standard_normal,
    lotka_volterra_config,
    sine_config,
)
from .training import TrainConfig, TrainingDivergedError, augment, batch_loss, kl_weight_at, make_batch, train
