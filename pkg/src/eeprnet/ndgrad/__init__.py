"""Minimal deterministic reverse-mode autodiff on numpy arrays."""
from .gradcheck import check_gradients, numerical_grad, relative_error
from .ops import (
    ParameterError,
    add,
    channel_l2_normalize,
    conv2d,
    dropout,
    flatten,
    fully_connected,
    index,
    l2_loss,
    leaky_relu,
    matmul_const,
    maxpool2,
    mul,
    relu,
    reshape,
    scale,
    softmax,
    softmax_cross_entropy,
    stack,
    tanh,
    total,
    weighted_sum,
)
from .optim import AdamState, Parameter, adam_step
from .rng import RngState, derive_seed
from .tensor import DimensionError, Tensor, as_tensor, default_dtype, precision
from .weights import WeightsFormatError, load_weights, save_weights

__all__ = [name for name in dir() if not name.startswith("_")]
