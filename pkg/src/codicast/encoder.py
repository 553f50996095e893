"""Convolutional autoencoder pretraining and the frozen condition encoder.

The encoder maps a normalized [H, W, C] frame to an [H, W, d_e] latent
with spatial dims preserved (2x2 same-padded convs, ReLU after every
layer).  After pretraining it is frozen and used to embed the two most
recent frames into the conditioning matrix consumed by the denoiser.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .grid import GridField, GridSeries, NormStats
from .nn import ParamStore, Tensor, adam_step, conv2d, relu
from .seeding import rng_from

_ENCODER_STREAM = 0xE7C0DE


@dataclass(frozen=True)
class EncoderConfig:
    """Autoencoder architecture and pretraining hyperparameters."""

    in_channels: int
    latent_channels: int = 32          # d_e
    epochs: int = 100
    batch_size: int = 128
    learning_rate: float = 1e-4
    decay_steps: int = 10000
    decay_rate: float = 0.95
    seed: int = 0

    @property
    def encoder_widths(self) -> tuple[int, ...]:
        d = self.latent_channels
        return (max(8, d // 16), max(8, d // 4), max(8, d // 2), d)

    @property
    def decoder_widths(self) -> tuple[int, ...]:
        d = self.latent_channels
        return (max(8, d // 2), max(8, d // 4))


class AutoencoderModel:
    """Encoder/decoder conv stacks over one parameter store."""

    def __init__(self, config: EncoderConfig):
        self.config = config
        self.store = ParamStore(seed=config.seed)
        self.loss_history: list[float] = []
        c = config.in_channels
        widths = config.encoder_widths
        prev = c
        for i, width in enumerate(widths):
            self.store.create(f"enc{i}.w", (2, 2, prev, width))
            self.store.create(f"enc{i}.b", (width,), "zeros")
            prev = width
        for i, width in enumerate(config.decoder_widths):
            self.store.create(f"dec{i}.w", (2, 2, prev, width))
            self.store.create(f"dec{i}.b", (width,), "zeros")
            prev = width
        self.store.create("out.w", (2, 2, prev, c))
        self.store.create("out.b", (c,), "zeros")

    @property
    def latent_channels(self) -> int:
        return self.config.latent_channels

    def encode(self, x: Tensor) -> Tensor:
        h = x
        for i in range(len(self.config.encoder_widths)):
            h = relu(conv2d(h, self.store[f"enc{i}.w"], self.store[f"enc{i}.b"]))
        return h

    def decode(self, z: Tensor) -> Tensor:
        h = z
        for i in range(len(self.config.decoder_widths)):
            h = relu(conv2d(h, self.store[f"dec{i}.w"], self.store[f"dec{i}.b"]))
        return conv2d(h, self.store["out.w"], self.store["out.b"])

    def reconstruct(self, x: Tensor) -> Tensor:
        return self.decode(self.encode(x))

    def encode_values(self, values: np.ndarray) -> np.ndarray:
        """Gradient-free encoding of a [B, H, W, C] batch."""
        if values.ndim != 4 or values.shape[-1] != self.config.in_channels:
            raise ShapeError(
                f"expected [B, H, W, {self.config.in_channels}], got {values.shape}")
        x = Tensor(values.astype(self.store.dtype, copy=False))
        return self.encode(x).data


@dataclass(frozen=True)
class ConditionEmbedding:
    """Latent conditioning matrix, shape [(H*W), 2*d_e]."""

    values: np.ndarray
    grid_shape: tuple[int, int]

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ShapeError("condition embedding contains non-finite values")
        h, w = self.grid_shape
        if self.values.shape[0] != h * w:
            raise ShapeError(
                f"embedding rows {self.values.shape[0]} != H*W = {h * w}")


def pretrain_autoencoder(train: GridSeries, config: EncoderConfig | None = None) -> AutoencoderModel:
    """Minimize per-frame reconstruction MSE with Adam; frames must be
    normalized.  Deterministic in ``config.seed``."""
    if config is None:
        config = EncoderConfig(in_channels=train.shape[-1])
    if config.in_channels != train.shape[-1]:
        raise ShapeError(
            f"config expects {config.in_channels} channels, data has {train.shape[-1]}")
    frames = train.values.astype(np.float32)
    n = frames.shape[0]
    batch = min(config.batch_size, n)
    model = AutoencoderModel(config)
    rng = rng_from(config.seed, _ENCODER_STREAM)
    step = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            x = Tensor(frames[idx])
            diff = model.reconstruct(x) - x
            loss = (diff * diff).mean()
            model.store.zero_grad()
            loss.backward()
            adam_step(model.store, config.learning_rate, step,
                      config.decay_steps, config.decay_rate)
            step += 1
            total += loss.item() * len(idx)
        model.loss_history.append(total / n)
    return model


def encode_condition(model: AutoencoderModel, x_prev: GridField, x_curr: GridField) -> ConditionEmbedding:
    """Embed two consecutive normalized frames: each frame is encoded
    independently, features are concatenated (previous first), and the
    result is flattened to [(H*W), 2*d_e]."""
    if x_prev.shape != x_curr.shape:
        raise ShapeError(f"frame shapes differ: {x_prev.shape} vs {x_curr.shape}")
    h, w, _ = x_prev.shape
    stacked = embed_pairs(model, x_prev.values[None], x_curr.values[None])
    return ConditionEmbedding(stacked[0], (h, w))


def embed_pairs(model: AutoencoderModel, prev: np.ndarray, curr: np.ndarray) -> np.ndarray:
    """Batched conditioning: [B, H, W, C] pairs -> [B, H*W, 2*d_e]."""
    b, h, w, _ = prev.shape
    e_prev = model.encode_values(prev)
    e_curr = model.encode_values(curr)
    return np.concatenate([e_prev, e_curr], axis=-1).reshape(b, h * w, 2 * model.latent_channels)


@dataclass(frozen=True)
class PretrainedEncoder:
    """A frozen autoencoder bundled with the normalization it was trained on."""

    model: AutoencoderModel
    stats: NormStats
    channel_names: tuple[str, ...]

    @property
    def latent_channels(self) -> int:
        return self.model.latent_channels

    @property
    def cond_channels(self) -> int:
        return 2 * self.model.latent_channels
