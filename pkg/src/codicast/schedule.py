"""Diffusion variance schedules and derived per-step quantities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

MODES = ("linear", "quadratic")

# defaults: 1000 steps with beta in [0.0001, 0.02]
DEFAULT_STEPS = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 2e-2


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step noise variances beta and the derived alpha products.

    ``sigma[n] = sqrt(beta[n])`` is the reverse-step noise scale.  Arrays
    are indexed 0..N-1 for steps 1..N.
    """

    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    sigma: np.ndarray
    mode: str
    beta_start: float
    beta_end: float

    @property
    def num_steps(self) -> int:
        return self.beta.shape[0]

    def coeffs(self, n: int) -> tuple[float, float, float, float]:
        """(beta_n, alpha_n, alpha_bar_n, sigma_n) for step n in [1, N]."""
        if not 1 <= n <= self.num_steps:
            raise ConfigError(f"step {n} out of range [1, {self.num_steps}]")
        i = n - 1
        return self.beta[i], self.alpha[i], self.alpha_bar[i], self.sigma[i]


def build_schedule(num_steps: int,
                   beta_start: float = DEFAULT_BETA_START,
                   beta_end: float = DEFAULT_BETA_END,
                   mode: str = "linear") -> NoiseSchedule:
    """Construct a noise schedule.

    Linear mode spaces beta evenly from beta_start to beta_end inclusive;
    quadratic mode spaces sqrt(beta) evenly and squares, which keeps the
    same endpoints but smaller interior betas.
    """
    if num_steps < 1:
        raise ConfigError(f"need at least one diffusion step, got {num_steps}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ConfigError(
            f"need 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]")
    if mode not in MODES:
        raise ConfigError(f"unknown schedule mode {mode!r}, expected one of {MODES}")

    if mode == "linear":
        beta = np.linspace(beta_start, beta_end, num_steps)
    else:
        beta = np.linspace(np.sqrt(beta_start), np.sqrt(beta_end), num_steps) ** 2

    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    sigma = np.sqrt(beta)
    for a in (beta, alpha, alpha_bar, sigma):
        a.flags.writeable = False
    return NoiseSchedule(beta=beta, alpha=alpha, alpha_bar=alpha_bar, sigma=sigma,
                         mode=mode, beta_start=beta_start, beta_end=beta_end)


def terminal_snr(s: NoiseSchedule) -> float:
    """Signal-to-noise ratio at the last step: alpha_bar_N / (1 - alpha_bar_N).

    Diagnostic for how close the fully-diffused state is to pure noise.
    """
    ab = s.alpha_bar[-1]
    return float(ab / (1.0 - ab))
