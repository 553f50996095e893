"""Forward diffusion, denoiser training, and ancestral sampling.

Training draws (previous, current, next) frame triples, corrupts the
next frame with the closed-form forward process at a per-example uniform
step, and regresses the injected noise with the cross-attention
conditioned U-Net.  Sampling starts from unit Gaussian noise and walks
the reverse chain, conditioning every step on the embedding of the two
most recent frames.  All randomness is derived from the config seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .denoiser import DenoiserConfig, DenoiserModel, fit_depth
from .encoder import PretrainedEncoder, embed_pairs
from .errors import ConfigError, DataError, ShapeError
from .grid import GridField, GridSeries, NormStats, normalize_values
from .nn import Tensor, adam_step
from .schedule import NoiseSchedule, build_schedule
from .seeding import derive_seed, rng_from

_TRAIN_STREAM = 0xD1FF
_SAMPLE_STREAM = 0x5A3B


@dataclass(frozen=True)
class DiffusionConfig:
    """Schedule plus denoiser-training hyperparameters."""

    num_steps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    schedule_mode: str = "linear"
    epochs: int = 800
    batch_size: int = 256
    learning_rate: float = 2e-4
    decay_steps: int = 10000
    decay_rate: float = 0.95
    attn_dim: int = 64
    base_width: int = 64
    seed: int = 0

    def __post_init__(self):
        if min(self.epochs, self.batch_size, self.decay_steps, self.num_steps) < 1:
            raise ConfigError("epochs, batch_size, decay_steps, num_steps must be positive")
        if self.learning_rate <= 0 or self.decay_rate <= 0:
            raise ConfigError("learning_rate and decay_rate must be positive")


def _values(x) -> np.ndarray:
    return x.values if isinstance(x, GridField) else np.asarray(x)


def forward_diffuse(x0, n: int, eps, s: NoiseSchedule):
    """Closed-form forward corruption: sqrt(abar_n) x0 + sqrt(1-abar_n) eps."""
    x0_vals, eps_vals = _values(x0), _values(eps)
    if x0_vals.shape != eps_vals.shape:
        raise ShapeError(f"noise shape {eps_vals.shape} != field shape {x0_vals.shape}")
    _, _, alpha_bar, _ = s.coeffs(n)
    out = np.sqrt(alpha_bar) * x0_vals + np.sqrt(1.0 - alpha_bar) * eps_vals
    return x0.with_values(out) if isinstance(x0, GridField) else out


def training_loss(model, x_prev, x_curr, x_next, n: int, eps) -> float:
    """Mean squared error between the injected noise and the denoiser's
    prediction on the diffused next frame (single example).

    ``model`` needs ``schedule``, ``encode_condition(prev, curr)``, and
    ``predict_noise(x_n, n, z)``; frames must be normalized.
    """
    eps_vals = _values(eps)
    x_n = forward_diffuse(_values(x_next), n, eps_vals, model.schedule)
    z = model.encode_condition(x_prev, x_curr)
    pred = model.predict_noise(x_n, n, z)
    if pred.shape != eps_vals.shape:
        raise ShapeError(f"prediction shape {pred.shape} != noise shape {eps_vals.shape}")
    diff = pred.astype(np.float64) - eps_vals
    return float(np.mean(diff * diff))


@dataclass
class TrainedModel:
    """Frozen encoder, trained denoiser, schedule, and normalization."""

    encoder: PretrainedEncoder
    denoiser: DenoiserModel
    schedule: NoiseSchedule
    stats: NormStats
    channel_names: tuple[str, ...]
    step_hours: float
    loss_history: list[float] = field(default_factory=list)

    def encode_condition(self, x_prev, x_curr) -> np.ndarray:
        """Embed a normalized frame pair to [(H*W), d_z]."""
        return embed_pairs(self.encoder.model, _values(x_prev)[None], _values(x_curr)[None])[0]

    def predict_noise(self, x_n, n: int, z: np.ndarray) -> np.ndarray:
        return self.denoiser.predict(_values(x_n), n, z)

    @property
    def grid_channels(self) -> int:
        return len(self.channel_names)


def train(config: DiffusionConfig, data: GridSeries, encoder: PretrainedEncoder) -> TrainedModel:
    """Train the conditional denoiser on consecutive frame triples.

    ``data`` is in raw units; frames are normalized with the encoder's
    statistics, consecutive (t-1, t -> t+1) triples are batched, and per
    example a uniform diffusion step and unit Gaussian noise drive the
    noise-regression objective.  Deterministic in ``config.seed``.
    """
    if len(data) < 3:
        raise DataError(f"training needs at least 3 frames, got {len(data)}")
    if data.shape[-1] != len(encoder.channel_names):
        raise ShapeError(
            f"data has {data.shape[-1]} channels, encoder was trained on {len(encoder.channel_names)}")
    t_total, h, w, c = (len(data),) + data.shape
    depth = fit_depth(h, w)

    schedule = build_schedule(config.num_steps, config.beta_start,
                              config.beta_end, config.schedule_mode)
    den_config = DenoiserConfig(
        channels=c, cond_channels=encoder.cond_channels, max_step=config.num_steps,
        attn_dim=config.attn_dim, base_width=config.base_width, depth=depth,
        seed=derive_seed(config.seed, _TRAIN_STREAM, 0))
    denoiser = DenoiserModel(den_config)
    dtype = denoiser.store.dtype

    frames = normalize_values(data.values, encoder.stats).astype(dtype)
    # the encoder is frozen, so conditioning embeddings are constant
    cond = embed_pairs(encoder.model, frames[:-2], frames[1:-1]).astype(dtype)
    targets = frames[2:]
    num_examples = targets.shape[0]
    batch = min(config.batch_size, num_examples)

    sqrt_ab = np.sqrt(schedule.alpha_bar).astype(dtype)
    sqrt_1mab = np.sqrt(1.0 - schedule.alpha_bar).astype(dtype)

    rng = rng_from(config.seed, _TRAIN_STREAM)
    history: list[float] = []
    step = 0
    for _ in range(config.epochs):
        order = rng.permutation(num_examples)
        total = 0.0
        for start in range(0, num_examples, batch):
            idx = order[start:start + batch]
            n = rng.integers(1, config.num_steps + 1, size=len(idx))
            eps = rng.standard_normal((len(idx), h, w, c)).astype(dtype)
            coeff_a = sqrt_ab[n - 1][:, None, None, None]
            coeff_b = sqrt_1mab[n - 1][:, None, None, None]
            x_n = coeff_a * targets[idx] + coeff_b * eps

            pred = denoiser.forward_batch(Tensor(x_n), n, Tensor(cond[idx]))
            diff = pred - Tensor(eps)
            loss = (diff * diff).mean()
            denoiser.store.zero_grad()
            loss.backward()
            adam_step(denoiser.store, config.learning_rate, step,
                      config.decay_steps, config.decay_rate)
            step += 1
            total += loss.item() * len(idx)
        history.append(total / num_examples)

    return TrainedModel(encoder=encoder, denoiser=denoiser, schedule=schedule,
                        stats=encoder.stats, channel_names=data.channel_names,
                        step_hours=data.step_hours, loss_history=history)


def sample(model: TrainedModel, x_prev, x_curr, seed: int):
    """Ancestral sampling of the next frame in normalized space.

    Starts from unit Gaussian noise and applies the reverse update
    x_{n-1} = (x_n - (1-alpha_n)/sqrt(1-abar_n) * eps_hat) / sqrt(alpha_n)
    + sigma_n * zeta, with zeta = 0 at the final step.  Deterministic in
    ``seed``; noise draws come in order (x_N, zeta_N, ..., zeta_2).
    """
    prev_vals, curr_vals = _values(x_prev), _values(x_curr)
    if prev_vals.shape != curr_vals.shape:
        raise ShapeError(f"conditioning shapes differ: {prev_vals.shape} vs {curr_vals.shape}")
    z = model.encode_condition(prev_vals, curr_vals)
    s = model.schedule
    rng = rng_from(seed, _SAMPLE_STREAM)
    x = rng.standard_normal(prev_vals.shape)
    for n in range(s.num_steps, 0, -1):
        beta, alpha, alpha_bar, sigma = s.coeffs(n)
        eps_hat = model.predict_noise(x, n, z).astype(np.float64)
        x = (x - (1.0 - alpha) / np.sqrt(1.0 - alpha_bar) * eps_hat) / np.sqrt(alpha)
        if n > 1:
            x = x + sigma * rng.standard_normal(x.shape)
    if isinstance(x_prev, GridField):
        return x_prev.with_values(x)
    return x
