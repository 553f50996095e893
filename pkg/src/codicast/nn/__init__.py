"""Minimal neural-network substrate: autodiff tensors, layer blocks,
parameter storage, Adam, and the checkpoint tensor format."""

from .tensor import Tensor, as_tensor, constant, concat, exp, log, sqrt, relu, sigmoid
from .tensor import conv2d, max_pool, upsample_nearest
from .functional import (GROUP_NORM_EPS, StepEmbedding, attention, dense, group_norm,
                         linear_t, residual_block, self_attention, softmax, swish)
from .params import ParamStore
from .optim import adam_step, decayed_lr
from .checkpoint import read_checkpoint, write_checkpoint

__all__ = [
    "Tensor", "as_tensor", "constant", "concat", "exp", "log", "sqrt", "relu", "sigmoid",
    "conv2d", "max_pool", "upsample_nearest",
    "GROUP_NORM_EPS", "StepEmbedding", "attention", "dense", "group_norm",
    "linear_t", "residual_block", "self_attention", "softmax", "swish",
    "ParamStore", "adam_step", "decayed_lr",
    "read_checkpoint", "write_checkpoint",
]
