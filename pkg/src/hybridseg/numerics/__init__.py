"""Autodiff tensors, neural layers and the optimizer."""
from .tensor import Tape, Tensor, backward, value_of, is_tensor
from .layers import MlpParams, GruParams, init_mlp, init_gru, mlp_forward, gru_cell_step
from .optim import AdamaxState, adamax_step, clip_grad_norm, global_norm, NonFiniteGradientError

__all__ = [
    "Tape", "Tensor", "backward", "value_of", "is_tensor",
    "MlpParams", "GruParams", "init_mlp", "init_gru", "mlp_forward", "gru_cell_step",
    "AdamaxState", "adamax_step", "clip_grad_norm", "global_norm", "NonFiniteGradientError",
]
