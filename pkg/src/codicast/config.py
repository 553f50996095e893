"""Run configuration: one JSON document, strict keys, defaults matching
the published training recipe (encoder 100 epochs / batch 128 / lr 1e-4;
denoiser 800 / 256 / 2e-4; decay 10000 @ 0.95; 1000-step linear schedule
over beta in [1e-4, 0.02]; 5-member ensembles)."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError


@dataclass
class DataSection:
    path: str | None = None
    dims: list[int] = field(default_factory=lambda: [300, 8, 16, 2])  # T, H, W, C
    seed: int = 0
    step_hours: float = 6.0
    perturbation: float = 0.02


@dataclass
class ScheduleSection:
    N: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    mode: str = "linear"


@dataclass
class EncoderSection:
    d_e: int = 32
    epochs: int = 100
    batch: int = 128
    lr: float = 1e-4


@dataclass
class DenoiserSection:
    base_width: int = 64
    d: int = 64


@dataclass
class TrainSection:
    epochs: int = 800
    batch: int = 256
    lr: float = 2e-4
    decay_steps: int = 10000
    decay_rate: float = 0.95
    seed: int = 0


@dataclass
class ForecastSection:
    T: int = 4
    M: int = 5


@dataclass
class IoSection:
    output_dir: str = "out"


_SECTIONS = {
    "data": DataSection,
    "schedule": ScheduleSection,
    "encoder": EncoderSection,
    "denoiser": DenoiserSection,
    "train": TrainSection,
    "forecast": ForecastSection,
    "io": IoSection,
}


@dataclass
class RunConfig:
    data: DataSection = field(default_factory=DataSection)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    encoder: EncoderSection = field(default_factory=EncoderSection)
    denoiser: DenoiserSection = field(default_factory=DenoiserSection)
    train: TrainSection = field(default_factory=TrainSection)
    forecast: ForecastSection = field(default_factory=ForecastSection)
    io: IoSection = field(default_factory=IoSection)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        """Build a config, rejecting unknown keys; every offending key is
        reported in one error."""
        problems: list[str] = []
        if not isinstance(doc, dict):
            raise ConfigError(f"config document must be an object, got {type(doc).__name__}")
        for key in doc:
            if key not in _SECTIONS:
                problems.append(f"unknown section {key!r}")
        sections: dict[str, object] = {}
        for name, section_cls in _SECTIONS.items():
            payload = doc.get(name, {})
            if not isinstance(payload, dict):
                problems.append(f"section {name!r} must be an object")
                continue
            known = {f.name: f for f in fields(section_cls)}
            kwargs = {}
            for key, value in payload.items():
                if key not in known:
                    problems.append(f"unknown key {name}.{key}")
                    continue
                kwargs[key] = value
            try:
                sections[name] = section_cls(**kwargs)
            except TypeError as exc:
                problems.append(f"section {name!r}: {exc}")
        config = cls(**sections) if not problems else None
        if config is not None:
            problems.extend(config._validate())
        if problems:
            raise ConfigError("invalid config: " + "; ".join(problems))
        return config

    def _validate(self) -> list[str]:
        problems = []
        d = self.data
        if len(d.dims) != 4 or any(int(v) != v or v < 1 for v in d.dims):
            problems.append(f"data.dims must be 4 positive integers, got {d.dims}")
        if d.step_hours <= 0:
            problems.append("data.step_hours must be positive")
        s = self.schedule
        if s.N < 1:
            problems.append("schedule.N must be >= 1")
        if not (0 < s.beta_start <= s.beta_end < 1):
            problems.append(
                f"schedule betas need 0 < beta_start <= beta_end < 1, got [{s.beta_start}, {s.beta_end}]")
        if s.mode not in ("linear", "quadratic"):
            problems.append(f"schedule.mode must be linear or quadratic, got {s.mode!r}")
        for name, section, keys in (
                ("encoder", self.encoder, ("d_e", "epochs", "batch")),
                ("train", self.train, ("epochs", "batch", "decay_steps")),
                ("forecast", self.forecast, ("T", "M")),
                ("denoiser", self.denoiser, ("base_width", "d"))):
            for key in keys:
                if getattr(section, key) < 1:
                    problems.append(f"{name}.{key} must be >= 1")
        if self.encoder.lr <= 0 or self.train.lr <= 0:
            problems.append("learning rates must be positive")
        if self.train.decay_rate <= 0:
            problems.append("train.decay_rate must be positive")
        return problems


def load_config(path: str | Path | None) -> RunConfig:
    """Read a JSON config file, or the defaults when no path is given."""
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return RunConfig.from_dict(doc)
