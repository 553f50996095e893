"""Autoregressive rollout, ensemble generation, and uncertainty fields.

A rollout normalizes the two conditioning frames, samples the next frame,
then slides the conditioning window over its own predictions (without
re-clipping), denormalizing only the returned trajectory.  Ensemble
member i derives its seed chain as (base_seed, i, step), so serial and
concurrent execution produce bit-identical results.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .diffusion import TrainedModel, sample
from .errors import ShapeError
from .grid import GridField, denormalize_values, normalize_values
from .seeding import derive_seed


@dataclass(frozen=True)
class ForecastEnsemble:
    """M sampled trajectories of T denormalized fields each."""

    members: tuple[tuple[GridField, ...], ...]
    member_seeds: tuple[int, ...]
    lead_hours: tuple[float, ...]

    def __post_init__(self):
        if len(self.members) < 1:
            raise ShapeError("ensemble needs at least one member")
        steps = {len(m) for m in self.members}
        if steps != {len(self.lead_hours)}:
            raise ShapeError(f"trajectory lengths {steps} != lead count {len(self.lead_hours)}")

    @property
    def num_members(self) -> int:
        return len(self.members)

    @property
    def num_steps(self) -> int:
        return len(self.lead_hours)

    def values(self) -> np.ndarray:
        """Stacked [M, T, H, W, C] member values."""
        return np.stack([[f.values for f in member] for member in self.members])


@dataclass(frozen=True)
class UncertaintyField:
    """Ensemble mean and population standard deviation at one lead time."""

    mean: GridField
    std: GridField
    lead_hours: float


def rollout(model: TrainedModel, x_tm1: GridField, x_t: GridField,
            steps: int, seed: int) -> tuple[GridField, ...]:
    """Sample a T-step trajectory, conditioning step k on the two most
    recent states (given frames first, then predictions).  Inputs are in
    raw units; the returned trajectory is denormalized."""
    if steps < 1:
        raise ShapeError(f"need at least one forecast step, got {steps}")
    if x_tm1.shape != x_t.shape:
        raise ShapeError(f"conditioning shapes differ: {x_tm1.shape} vs {x_t.shape}")
    if x_tm1.shape[-1] != model.grid_channels:
        raise ShapeError(
            f"fields have {x_tm1.shape[-1]} channels, model expects {model.grid_channels}")
    prev = normalize_values(x_tm1.values, model.stats)
    curr = normalize_values(x_t.values, model.stats)
    outputs = []
    for k in range(1, steps + 1):
        pred = sample(model, prev, curr, derive_seed(seed, k))
        outputs.append(x_t.with_values(denormalize_values(pred, model.stats)))
        prev, curr = curr, pred
    return tuple(outputs)


def ensemble_forecast(model: TrainedModel, x_tm1: GridField, x_t: GridField,
                      steps: int, members: int, base_seed: int,
                      workers: int = 0) -> ForecastEnsemble:
    """Run ``members`` independent rollouts with seeds derived from
    (base_seed, member index).  ``workers`` > 0 runs members in threads;
    the result is identical either way."""
    if members < 1:
        raise ShapeError(f"need at least one ensemble member, got {members}")
    seeds = tuple(derive_seed(base_seed, i) for i in range(members))

    def run(member_seed: int) -> tuple[GridField, ...]:
        return rollout(model, x_tm1, x_t, steps, member_seed)

    if workers > 0:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trajectories = tuple(pool.map(run, seeds))
    else:
        trajectories = tuple(run(s) for s in seeds)
    leads = tuple(k * model.step_hours for k in range(1, steps + 1))
    return ForecastEnsemble(members=trajectories, member_seeds=seeds, lead_hours=leads)


def uncertainty(ensemble: ForecastEnsemble) -> tuple[UncertaintyField, ...]:
    """Per-lead ensemble mean and population std over the member axis."""
    vals = ensemble.values()
    template = ensemble.members[0][0]
    fields = []
    for t, lead in enumerate(ensemble.lead_hours):
        fields.append(UncertaintyField(
            mean=template.with_values(vals[:, t].mean(axis=0)),
            std=template.with_values(vals[:, t].std(axis=0)),
            lead_hours=lead))
    return tuple(fields)


def coverage(ensemble: ForecastEnsemble, truth, k: float) -> np.ndarray:
    """Fraction of grid points whose truth lies within mean +/- k*std,
    per (lead, channel).  ``truth`` is a sequence of T fields or a
    [T, H, W, C] array; degenerate std counts points with truth == mean."""
    truth_vals = np.stack([f.values for f in truth]) if not isinstance(truth, np.ndarray) else truth
    vals = ensemble.values()
    if truth_vals.shape != vals.shape[1:]:
        raise ShapeError(f"truth shape {truth_vals.shape} != trajectory shape {vals.shape[1:]}")
    mean = vals.mean(axis=0)
    std = vals.std(axis=0)
    inside = np.abs(truth_vals - mean) <= k * std
    return inside.mean(axis=(1, 2))
