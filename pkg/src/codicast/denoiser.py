"""The noise-prediction network: a cross-attention conditioning block
feeding a U-Net.

Queries come from the flattened noisy field, keys and values from the
condition embedding; the attended output is projected back to C channels
and added residually, so the U-Net consumes a C-channel conditioned
field.  The U-Net runs ``depth`` down/up units of two ResNet blocks each
(widths base_width * j), max-pool down, nearest x2 up, skip connections
paired by resolution, and single-head self-attention between the ResNet
blocks at the two coarsest resolutions.  The diffusion step enters every
ResNet block through a sinusoidal embedding passed through a two-layer
dense head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import ConditionEmbedding
from .errors import ConfigError, ShapeError
from .nn import (ParamStore, StepEmbedding, Tensor, attention, concat, conv2d, dense,
                 group_norm, linear_t, max_pool, residual_block, self_attention,
                 swish, upsample_nearest)


@dataclass(frozen=True)
class DenoiserConfig:
    channels: int                 # C, grid channels
    cond_channels: int            # d_z = 2 * d_e
    max_step: int                 # N, largest diffusion step the net will see
    attn_dim: int = 64            # d, cross-attention projection width
    base_width: int = 64
    depth: int = 4
    groups: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")
        if self.base_width % self.groups:
            raise ConfigError(
                f"base_width {self.base_width} must be divisible by {self.groups} norm groups")
        if min(self.channels, self.cond_channels, self.max_step, self.attn_dim) < 1:
            raise ConfigError("channels, cond_channels, max_step, attn_dim must be positive")

    @property
    def emb_dim(self) -> int:
        return 4 * self.base_width

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(self.base_width * j for j in range(1, self.depth + 1))


def fit_depth(h: int, w: int, max_depth: int = 4) -> int:
    """Largest pooling depth the grid supports, capped at ``max_depth``."""
    depth = 0
    while depth < max_depth and h % 2 == 0 and w % 2 == 0 and h > 1 and w > 1:
        h //= 2
        w //= 2
        depth += 1
    if depth == 0:
        raise ConfigError(f"grid {h}x{w} supports no pooling")
    return depth


@dataclass(frozen=True)
class CrossAttentionBlock:
    """Learnable projections of Eq.-style conditioning: queries from the
    noisy field, keys/values from the condition embedding."""

    wq: Tensor   # [d, C]
    wk: Tensor   # [d, d_z]
    wv: Tensor   # [d, d_z]
    wo: Tensor   # [C, d]

    @property
    def dim(self) -> int:
        return self.wq.data.shape[0]

    @property
    def cond_channels(self) -> int:
        return self.wk.data.shape[1]


class DenoiserModel:
    """Cross-attention conditioning plus the step-conditioned U-Net."""

    def __init__(self, config: DenoiserConfig):
        self.config = config
        self.store = ParamStore(seed=config.seed)
        self.step_embedding = StepEmbedding(config.emb_dim)
        c, dz, d = config.channels, config.cond_channels, config.attn_dim
        e = config.emb_dim

        # query/key projections start hot (gain 4): at plain fan-in scale
        # the attention scores are so flat that softmax passes no gradient
        self.store.create("cross.wq", (d, c), fan_in=c, gain=4.0)
        self.store.create("cross.wk", (d, dz), fan_in=dz, gain=4.0)
        self.store.create("cross.wv", (d, dz), fan_in=dz)
        self.store.create("cross.wo", (c, d), fan_in=d)

        self.store.create("emb.w1", (e, e))
        self.store.create("emb.b1", (e,), "zeros")
        self.store.create("emb.w2", (e, e))
        self.store.create("emb.b2", (e,), "zeros")

        widths = config.widths
        # the U-Net consumes [noisy field, attention mixture]: 2C channels
        self.store.create("stem.w", (3, 3, 2 * c, widths[0]))
        self.store.create("stem.b", (widths[0],), "zeros")

        for j in range(1, config.depth + 1):
            w_in = widths[j - 2] if j > 1 else widths[0]
            w_out = widths[j - 1]
            self._create_res(f"down{j}.resa", w_in, w_out)
            if j == config.depth:
                self._create_attn(f"down{j}.attn", w_out)
            self._create_res(f"down{j}.resb", w_out, w_out)

        for i in range(1, config.depth + 1):
            w_out = widths[config.depth - i]
            if i == 1:
                w_in = widths[-1]
            else:
                w_in = 2 * widths[config.depth - i + 1]
            self._create_res(f"up{i}.resa", w_in, w_out)
            if i <= 2:
                self._create_attn(f"up{i}.attn", w_out)
            self._create_res(f"up{i}.resb", w_out, w_out)

        self.store.create("final.norm_scale", (2 * widths[0],), "ones")
        self.store.create("final.norm_shift", (2 * widths[0],), "zeros")
        self.store.create("final.w", (1, 1, 2 * widths[0], c))
        self.store.create("final.b", (c,), "zeros")

    def _create_res(self, prefix: str, cin: int, cout: int) -> None:
        e = self.config.emb_dim
        self.store.create(f"{prefix}.norm1_scale", (cin,), "ones")
        self.store.create(f"{prefix}.norm1_shift", (cin,), "zeros")
        self.store.create(f"{prefix}.conv1_w", (3, 3, cin, cout))
        self.store.create(f"{prefix}.conv1_b", (cout,), "zeros")
        self.store.create(f"{prefix}.emb_w", (e, cout))
        self.store.create(f"{prefix}.emb_b", (cout,), "zeros")
        self.store.create(f"{prefix}.norm2_scale", (cout,), "ones")
        self.store.create(f"{prefix}.norm2_shift", (cout,), "zeros")
        self.store.create(f"{prefix}.conv2_w", (3, 3, cout, cout))
        self.store.create(f"{prefix}.conv2_b", (cout,), "zeros")
        if cin != cout:
            self.store.create(f"{prefix}.skip_w", (1, 1, cin, cout))
            self.store.create(f"{prefix}.skip_b", (cout,), "zeros")

    def _create_attn(self, prefix: str, c: int) -> None:
        self.store.create(f"{prefix}.norm_scale", (c,), "ones")
        self.store.create(f"{prefix}.norm_shift", (c,), "zeros")
        for q in ("q", "k", "v", "o"):
            self.store.create(f"{prefix}.{q}_w", (c, c))
        self.store.create(f"{prefix}.o_b", (c,), "zeros")

    # -- structural views ------------------------------------------------

    @property
    def cross_attention(self) -> CrossAttentionBlock:
        s = self.store
        return CrossAttentionBlock(s["cross.wq"], s["cross.wk"], s["cross.wv"], s["cross.wo"])

    @property
    def attention_divisors(self) -> tuple[int, int]:
        """Grid divisors of the two coarsest resolutions carrying self-attention."""
        return (2 ** (self.config.depth - 1), 2 ** self.config.depth)

    # -- forward passes ----------------------------------------------------

    def _check_spatial(self, h: int, w: int) -> None:
        div = 2 ** self.config.depth
        if h % div or w % div:
            raise ShapeError(
                f"grid {h}x{w} not divisible by 2^depth = {div}")

    def condition_batch(self, x: Tensor, z: Tensor) -> Tensor:
        """Cross-attend x [B,H,W,C] against the embedding z [B,S,d_z] and
        stack the noisy field with the projected attention output along
        channels, giving the conditioning its own [..., C:] lane."""
        b, h, w, c = x.data.shape
        block = self.cross_attention
        flat = x.reshape(b, h * w, c)
        att = attention(linear_t(flat, block.wq),
                        linear_t(z, block.wk),
                        linear_t(z, block.wv))
        mixture = linear_t(att, block.wo).reshape(b, h, w, c)
        return concat([x, mixture], axis=-1)

    def unet_batch(self, x: Tensor, n: np.ndarray) -> Tensor:
        """U-Net forward on a conditioned batch; n holds per-example steps."""
        b, h, w, _ = x.data.shape
        self._check_spatial(h, w)
        n = np.asarray(n)
        if np.any(n < 1) or np.any(n > self.config.max_step):
            raise ShapeError(
                f"diffusion step out of range [1, {self.config.max_step}]: {n}")
        s, cfg = self.store, self.config
        emb0 = Tensor(self.step_embedding(n).astype(s.dtype))
        emb = dense(swish(dense(emb0, s["emb.w1"], s["emb.b1"])), s["emb.w2"], s["emb.b2"])

        g = cfg.groups
        hmap = conv2d(x, s["stem.w"], s["stem.b"])
        skips = []
        for j in range(1, cfg.depth + 1):
            hmap = residual_block(hmap, emb, s.group(f"down{j}.resa"), g)
            if j == cfg.depth:
                hmap = self_attention(hmap, s.group(f"down{j}.attn"), g)
            hmap = residual_block(hmap, emb, s.group(f"down{j}.resb"), g)
            skips.append(hmap)
            hmap = max_pool(hmap)
        for i in range(1, cfg.depth + 1):
            if i > 1:
                hmap = concat([hmap, skips[cfg.depth - i + 1]], axis=-1)
            hmap = residual_block(hmap, emb, s.group(f"up{i}.resa"), g)
            if i <= 2:
                hmap = self_attention(hmap, s.group(f"up{i}.attn"), g)
            hmap = residual_block(hmap, emb, s.group(f"up{i}.resb"), g)
            hmap = upsample_nearest(hmap)
        hmap = concat([hmap, skips[0]], axis=-1)
        hmap = swish(group_norm(hmap, s["final.norm_scale"], s["final.norm_shift"], g))
        return conv2d(hmap, s["final.w"], s["final.b"])

    def forward_batch(self, x: Tensor, n: np.ndarray, z: Tensor) -> Tensor:
        return self.unet_batch(self.condition_batch(x, z), n)

    def predict(self, x: np.ndarray, n: int, z: np.ndarray) -> np.ndarray:
        """Gradient-free noise prediction for one [H, W, C] field."""
        dt = self.store.dtype
        xt = Tensor(x[None].astype(dt, copy=False))
        zt = Tensor(z[None].astype(dt, copy=False))
        return self.forward_batch(xt, np.array([n]), zt).data[0]


def cross_attend(block: CrossAttentionBlock, x_flat: np.ndarray,
                 z: ConditionEmbedding) -> np.ndarray:
    """Condition a flattened noisy field [(H*W), C] on the embedding:
    returns [H, W, 2C] with the field in channels [:C] and the projected
    attention mixture in channels [C:]."""
    h, w = z.grid_shape
    if x_flat.shape[0] != h * w:
        raise ShapeError(f"field rows {x_flat.shape[0]} != H*W = {h * w}")
    if z.values.shape[1] != block.cond_channels:
        raise ShapeError(
            f"embedding width {z.values.shape[1]} != block d_z = {block.cond_channels}")
    dt = block.wq.data.dtype
    flat = Tensor(x_flat[None].astype(dt, copy=False))
    zt = Tensor(z.values[None].astype(dt, copy=False))
    att = attention(linear_t(flat, block.wq), linear_t(zt, block.wk), linear_t(zt, block.wv))
    mixture = linear_t(att, block.wo)
    c = x_flat.shape[1]
    out = np.concatenate([flat.data[0], mixture.data[0]], axis=-1)
    return out.reshape(h, w, 2 * c)


def predict_noise(model: DenoiserModel, conditioned: np.ndarray, n: int) -> np.ndarray:
    """Run the U-Net alone on an already-conditioned [H, W, 2C] field
    (the ``cross_attend`` output); returns the [H, W, C] noise estimate."""
    xt = Tensor(conditioned[None].astype(model.store.dtype, copy=False))
    return model.unet_batch(xt, np.array([n])).data[0]
