"""Network building blocks composed from the autodiff primitives.

All blocks take explicit parameter tensors so that model classes own the
wiring while gradients flow automatically.  Image tensors are
[B, H, W, C]; token tensors are [B, S, F] or [S, F].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor, constant, exp, group_norm_nd, swish  # noqa: F401
from .tensor import conv2d, max_pool, upsample_nearest  # re-exported  # noqa: F401

GROUP_NORM_EPS = 1e-5


def dense(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map on the last axis; w is [in, out]."""
    out = x @ w
    return out if b is None else out + b


def linear_t(x: Tensor, w: Tensor) -> Tensor:
    """Bias-free projection by a [out, in] matrix (x @ w.T)."""
    return x @ w.T


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Row-normalized exponentials, stabilized by a detached max shift."""
    shift = constant(x.data.max(axis=axis, keepdims=True))
    e = exp(x - shift)
    return e / e.sum(axis=axis, keepdims=True)


def group_norm(x: Tensor, scale: Tensor, shift: Tensor,
               groups: int = 8, eps: float = GROUP_NORM_EPS) -> Tensor:
    """Normalize [B, H, W, C] over spatial dims and channel groups."""
    return group_norm_nd(x, scale, shift, groups, eps)


def attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """softmax(q kᵀ / sqrt(d)) v over the token axis."""
    d = q.data.shape[-1]
    scores = (q @ k.transpose(_swap_last(k.data.ndim))) * (1.0 / np.sqrt(d))
    return softmax(scores, axis=-1) @ v


def _swap_last(ndim: int) -> tuple[int, ...]:
    axes = list(range(ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return tuple(axes)


def residual_block(x: Tensor, emb: Tensor, p: Mapping[str, Tensor],
                   groups: int = 8) -> Tensor:
    """Pre-norm ResNet block with an additive per-channel step-embedding bias.

    Expects params: norm1_scale/shift, conv1_w/b, emb_w/b,
    norm2_scale/shift, conv2_w/b, and skip_w/b when channel counts change.
    """
    h = conv2d(swish(group_norm(x, p["norm1_scale"], p["norm1_shift"], groups)),
               p["conv1_w"], p["conv1_b"])
    bias = dense(swish(emb), p["emb_w"], p["emb_b"])
    h = h + bias.reshape(bias.data.shape[0], 1, 1, bias.data.shape[-1])
    h = conv2d(swish(group_norm(h, p["norm2_scale"], p["norm2_shift"], groups)),
               p["conv2_w"], p["conv2_b"])
    if "skip_w" in p:
        x = conv2d(x, p["skip_w"], p["skip_b"])
    return h + x


def self_attention(x: Tensor, p: Mapping[str, Tensor], groups: int = 8) -> Tensor:
    """Single-head spatial self-attention with a residual connection.

    Expects params: norm_scale/shift, bias-free q_w/k_w/v_w, and o_w/o_b.
    A key-projection bias would shift every attention score row-uniformly
    and vanish in the softmax, so the projections carry no biases.
    """
    b, h, w, c = x.data.shape
    tokens = group_norm(x, p["norm_scale"], p["norm_shift"], groups).reshape(b, h * w, c)
    out = attention(dense(tokens, p["q_w"]),
                    dense(tokens, p["k_w"]),
                    dense(tokens, p["v_w"]))
    return x + dense(out, p["o_w"], p["o_b"]).reshape(b, h, w, c)


@dataclass(frozen=True)
class StepEmbedding:
    """Sinusoidal embedding of the diffusion-step index."""

    dim: int
    max_period: float = 10000.0

    def __post_init__(self):
        if self.dim <= 0 or self.dim % 2:
            raise ShapeError(f"embedding dim must be even and positive, got {self.dim}")

    def __call__(self, n) -> np.ndarray:
        """Embed step indices; scalar -> [dim], vector [B] -> [B, dim]."""
        n = np.asarray(n, dtype=np.float64)
        half = self.dim // 2
        freqs = np.exp(-np.log(self.max_period) * np.arange(half) / half)
        args = n[..., None] * freqs
        return np.concatenate([np.sin(args), np.cos(args)], axis=-1)
