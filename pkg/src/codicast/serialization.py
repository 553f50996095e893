"""Saving and loading encoder bundles and trained models.

A trained model persists as one CKPT1 file: JSON metadata (schedule
parameters, normalization stats, architecture header, channel names,
seeds) plus every parameter tensor, with "encoder." / "denoiser."
prefixes.  Schedule arrays are recomputed on load from their parameters.
"""

from __future__ import annotations

from dataclasses import asdict
from pathlib import Path

import numpy as np

from .denoiser import DenoiserConfig, DenoiserModel
from .diffusion import TrainedModel
from .encoder import AutoencoderModel, EncoderConfig, PretrainedEncoder
from .errors import CheckpointError
from .grid import NormStats
from .nn import read_checkpoint, write_checkpoint
from .schedule import build_schedule

_FORMAT = 1


def _encoder_meta(bundle: PretrainedEncoder) -> dict:
    return {
        "config": asdict(bundle.model.config),
        "stats": bundle.stats.to_dict(),
        "channel_names": list(bundle.channel_names),
        "loss_history": [float(x) for x in bundle.model.loss_history],
    }


def _encoder_from_meta(meta: dict, arrays: dict[str, np.ndarray]) -> PretrainedEncoder:
    config = EncoderConfig(**meta["config"])
    model = AutoencoderModel(config)
    model.store.load_arrays(arrays)
    model.loss_history = list(meta.get("loss_history", []))
    return PretrainedEncoder(model=model,
                             stats=NormStats.from_dict(meta["stats"]),
                             channel_names=tuple(meta["channel_names"]))


def save_encoder(path: str | Path, bundle: PretrainedEncoder) -> None:
    meta = {"kind": "encoder", "format": _FORMAT, **_encoder_meta(bundle)}
    write_checkpoint(path, meta, bundle.model.store.state_arrays())


def load_encoder(path: str | Path) -> PretrainedEncoder:
    meta, arrays = read_checkpoint(path)
    if meta.get("kind") != "encoder" or meta.get("format") != _FORMAT:
        raise CheckpointError(
            f"{path} is not an encoder checkpoint (kind={meta.get('kind')}, format={meta.get('format')})")
    return _encoder_from_meta(meta, arrays)


def save_model(path: str | Path, model: TrainedModel) -> None:
    meta = {
        "kind": "model",
        "format": _FORMAT,
        "schedule": {
            "N": model.schedule.num_steps,
            "beta_start": model.schedule.beta_start,
            "beta_end": model.schedule.beta_end,
            "mode": model.schedule.mode,
        },
        "stats": model.stats.to_dict(),
        "channel_names": list(model.channel_names),
        "step_hours": model.step_hours,
        "denoiser": asdict(model.denoiser.config),
        "attention_divisors": list(model.denoiser.attention_divisors),
        "encoder": _encoder_meta(model.encoder),
        "loss_history": [float(x) for x in model.loss_history],
    }
    arrays = {f"denoiser.{k}": v for k, v in model.denoiser.store.state_arrays().items()}
    arrays.update({f"encoder.{k}": v
                   for k, v in model.encoder.model.store.state_arrays().items()})
    write_checkpoint(path, meta, arrays)


def load_model(path: str | Path) -> TrainedModel:
    meta, arrays = read_checkpoint(path)
    if meta.get("kind") != "model" or meta.get("format") != _FORMAT:
        raise CheckpointError(
            f"{path} is not a model checkpoint (kind={meta.get('kind')}, format={meta.get('format')})")
    encoder = _encoder_from_meta(
        meta["encoder"],
        {k[len("encoder."):]: v for k, v in arrays.items() if k.startswith("encoder.")})
    denoiser = DenoiserModel(DenoiserConfig(**meta["denoiser"]))
    denoiser.store.load_arrays(
        {k[len("denoiser."):]: v for k, v in arrays.items() if k.startswith("denoiser.")})
    sched = meta["schedule"]
    schedule = build_schedule(sched["N"], sched["beta_start"], sched["beta_end"], sched["mode"])
    return TrainedModel(encoder=encoder, denoiser=denoiser, schedule=schedule,
                        stats=NormStats.from_dict(meta["stats"]),
                        channel_names=tuple(meta["channel_names"]),
                        step_hours=float(meta["step_hours"]),
                        loss_history=list(meta.get("loss_history", [])))
