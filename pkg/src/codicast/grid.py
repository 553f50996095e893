"""Gridded field containers, the GWF file format, normalization, and
synthetic advection data for desk-scale experiments.

A GWF file is a single UTF-8 JSON header line terminated by ``\\n`` with
keys {magic:"GWF1", T, H, W, C, step_hours, channel_names, lat_deg,
lon_deg, dtype:"f32le", layout:"THWC"}, followed immediately by
T*H*W*C little-endian float32 values in row-major [t][h][w][c] order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, ShapeError
from .seeding import rng_from

_GWF_MAGIC = "GWF1"
_HEADER_KEYS = {
    "magic", "T", "H", "W", "C", "step_hours",
    "channel_names", "lat_deg", "lon_deg", "dtype", "layout",
}


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=np.float64)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class GridField:
    """One time slice of the gridded state, shape [H, W, C]."""

    values: np.ndarray
    lat_deg: np.ndarray
    lon_deg: np.ndarray
    channel_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        object.__setattr__(self, "lat_deg", _frozen(self.lat_deg))
        object.__setattr__(self, "lon_deg", _frozen(self.lon_deg))
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        if self.values.ndim != 3:
            raise ShapeError(f"values must be [H, W, C], got shape {self.values.shape}")
        h, w, c = self.values.shape
        if h < 2 or w < 2 or c < 1:
            raise ShapeError(f"grid too small: H={h}, W={w}, C={c}")
        if self.lat_deg.shape != (h,) or self.lon_deg.shape != (w,):
            raise ShapeError("coordinate lengths do not match grid dimensions")
        if len(self.channel_names) != c:
            raise ShapeError("channel_names length does not match channel count")
        if not np.all(np.isfinite(self.values)):
            raise DataError("non-finite values")
        _check_coords(self.lat_deg, self.lon_deg)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    def with_values(self, values: np.ndarray) -> "GridField":
        """Same grid, new values."""
        return GridField(values, self.lat_deg, self.lon_deg, self.channel_names)


def _check_coords(lat_deg: np.ndarray, lon_deg: np.ndarray) -> None:
    if np.any(np.diff(lat_deg) <= 0) or np.any(np.diff(lon_deg) <= 0):
        raise DataError("non-monotone coordinates")
    if np.any(lat_deg <= -90) or np.any(lat_deg >= 90):
        raise DataError(f"latitudes must lie in (-90, 90), got [{lat_deg.min()}, {lat_deg.max()}]")
    if np.any(lon_deg < 0) or np.any(lon_deg >= 360):
        raise DataError(f"longitudes must lie in [0, 360), got [{lon_deg.min()}, {lon_deg.max()}]")


@dataclass(frozen=True)
class GridSeries:
    """Time-ordered frames on a shared grid, ``step_hours`` apart.

    The container itself accepts any length >= 1; consumers enforce their
    own minimums (a conditioning pair needs 2 frames, training needs 3).
    """

    frames: tuple[GridField, ...]
    step_hours: float

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if len(self.frames) < 1:
            raise DataError("series needs at least 1 frame")
        if self.step_hours <= 0:
            raise DataError(f"step_hours must be positive, got {self.step_hours}")
        first = self.frames[0]
        for f in self.frames[1:]:
            if (f.shape != first.shape
                    or not np.array_equal(f.lat_deg, first.lat_deg)
                    or not np.array_equal(f.lon_deg, first.lon_deg)
                    or f.channel_names != first.channel_names):
                raise ShapeError("all frames must share grid and channels")

    def __len__(self) -> int:
        return len(self.frames)

    def __getitem__(self, t: int) -> GridField:
        return self.frames[t]

    @property
    def values(self) -> np.ndarray:
        """Stacked [T, H, W, C] copy of all frames."""
        return np.stack([f.values for f in self.frames])

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.frames[0].shape

    @property
    def channel_names(self) -> tuple[str, ...]:
        return self.frames[0].channel_names


@dataclass(frozen=True)
class NormStats:
    """Per-channel max-min normalization statistics (training split only)."""

    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "minimum", _frozen(self.minimum))
        object.__setattr__(self, "maximum", _frozen(self.maximum))
        if self.minimum.shape != self.maximum.shape or self.minimum.ndim != 1:
            raise ShapeError("min/max must be matching 1-d channel vectors")
        if np.any(self.minimum > self.maximum):
            raise DataError("channel minimum exceeds maximum")

    @property
    def degenerate_flags(self) -> np.ndarray:
        return np.asarray(self.maximum == self.minimum)

    @property
    def num_channels(self) -> int:
        return self.minimum.shape[0]

    def to_dict(self) -> dict:
        return {"min": self.minimum.tolist(), "max": self.maximum.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(np.asarray(d["min"], dtype=np.float64), np.asarray(d["max"], dtype=np.float64))


def fit_norm(train: GridSeries) -> NormStats:
    """Exact per-channel extrema over all frames of the training split."""
    stacked = train.values
    return NormStats(stacked.min(axis=(0, 1, 2)), stacked.max(axis=(0, 1, 2)))


def normalize_values(values: np.ndarray, stats: NormStats) -> np.ndarray:
    """Map values into [0, 1] per channel; degenerate channels go to 0.5.

    Values outside the training extrema map outside [0, 1] on purpose:
    clipping would silently corrupt test-time extremes.
    """
    if values.shape[-1] != stats.num_channels:
        raise ShapeError(
            f"channel-count mismatch: values have {values.shape[-1]}, stats have {stats.num_channels}")
    span = stats.maximum - stats.minimum
    degenerate = stats.degenerate_flags
    safe_span = np.where(degenerate, 1.0, span)
    out = (values - stats.minimum) / safe_span
    return np.where(degenerate, 0.5, out)


def denormalize_values(values: np.ndarray, stats: NormStats) -> np.ndarray:
    """Invert ``normalize_values``; degenerate channels return the constant min."""
    if values.shape[-1] != stats.num_channels:
        raise ShapeError(
            f"channel-count mismatch: values have {values.shape[-1]}, stats have {stats.num_channels}")
    span = stats.maximum - stats.minimum
    degenerate = stats.degenerate_flags
    out = values * span + stats.minimum
    return np.where(degenerate, stats.minimum, out)


def normalize(x: GridField, stats: NormStats) -> GridField:
    return x.with_values(normalize_values(x.values, stats))


def denormalize(x: GridField, stats: NormStats) -> GridField:
    return x.with_values(denormalize_values(x.values, stats))


def normalize_series(series: GridSeries, stats: NormStats) -> GridSeries:
    return GridSeries(tuple(normalize(f, stats) for f in series.frames), series.step_hours)


def center_latitudes(h: int) -> np.ndarray:
    """Equiangular cell-center latitudes: -90 + (h + 0.5) * 180 / H."""
    return -90.0 + (np.arange(h) + 0.5) * (180.0 / h)


def regular_longitudes(w: int) -> np.ndarray:
    return np.arange(w) * (360.0 / w)


def _smooth_field(rng: np.random.Generator, h: int, w: int, n_modes: int = 4) -> np.ndarray:
    """Random superposition of low-wavenumber modes, periodic in longitude."""
    hh = (np.arange(h)[:, None] + 0.5) / h
    ww = np.arange(w)[None, :] / w
    field = np.zeros((h, w))
    for j in range(n_modes):
        m = rng.integers(1, 4)          # zonal wavenumber
        l = rng.integers(0, 3)          # meridional wavenumber
        amp = rng.uniform(0.4, 1.0) / (j + 1)
        phase_w = rng.uniform(0, 2 * np.pi)
        phase_h = rng.uniform(0, 2 * np.pi)
        field += amp * np.cos(2 * np.pi * m * ww + phase_w) * np.cos(np.pi * l * hh + phase_h)
    return field


def make_synthetic(h: int, w: int, c: int, t: int, seed: int,
                   step_hours: float = 6.0,
                   perturbation: float = 0.02) -> GridSeries:
    """Synthetic zonal-advection series: each step circularly shifts every
    channel along longitude by its channel speed, plus a small smooth
    perturbation of the given amplitude.  Deterministic in ``seed``.
    """
    if h < 2 or w < 2 or c < 1:
        raise ShapeError(f"invalid dims: H={h}, W={w}, C={c}")
    if t < 3:
        raise DataError(f"synthetic series needs T >= 3, got {t}")
    rng = rng_from(seed)
    speeds = synthetic_speeds(c)
    state = np.empty((h, w, c))
    for ch in range(c):
        state[:, :, ch] = ch + _smooth_field(rng, h, w)
    lat, lon = center_latitudes(h), regular_longitudes(w)
    names = tuple(f"var{ch}" for ch in range(c))

    frames = []
    for step in range(t):
        if step > 0:
            nxt = np.empty_like(state)
            for ch in range(c):
                nxt[:, :, ch] = np.roll(state[:, :, ch], speeds[ch], axis=1)
            if perturbation > 0:
                for ch in range(c):
                    nxt[:, :, ch] += perturbation * _smooth_field(rng, h, w)
            state = nxt
        # round through f32 so GWF save/load roundtrips are bit-identical
        stored = state.astype(np.float32).astype(np.float64)
        frames.append(GridField(stored, lat, lon, names))
    return GridSeries(tuple(frames), step_hours)


def synthetic_speeds(c: int) -> list[int]:
    """Channel advection speeds used by ``make_synthetic`` (columns per step)."""
    return [2 + (ch % 3) for ch in range(c)]


def save_series(path: str | Path, series: GridSeries) -> None:
    """Write a GWF container file."""
    first = series.frames[0]
    h, w, c = first.shape
    header = {
        "magic": _GWF_MAGIC,
        "T": len(series),
        "H": h,
        "W": w,
        "C": c,
        "step_hours": series.step_hours,
        "channel_names": list(first.channel_names),
        "lat_deg": first.lat_deg.tolist(),
        "lon_deg": first.lon_deg.tolist(),
        "dtype": "f32le",
        "layout": "THWC",
    }
    payload = series.values.astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.write(payload)


def load_series(path: str | Path) -> GridSeries:
    """Read and validate a GWF container file."""
    with open(path, "rb") as fh:
        raw = fh.read()
    newline = raw.find(b"\n")
    if newline < 0:
        raise DataError("malformed header: no newline-terminated header line")
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"malformed header: {exc}") from exc
    if not isinstance(header, dict) or header.get("magic") != _GWF_MAGIC:
        raise DataError("malformed header: bad magic")
    missing = _HEADER_KEYS - set(header)
    if missing:
        raise DataError(f"malformed header: missing keys {sorted(missing)}")
    if header["dtype"] != "f32le" or header["layout"] != "THWC":
        raise DataError(
            f"malformed header: unsupported dtype/layout {header['dtype']}/{header['layout']}")
    try:
        t, h, w, c = (int(header[k]) for k in ("T", "H", "W", "C"))
        step_hours = float(header["step_hours"])
    except (TypeError, ValueError) as exc:
        raise DataError(f"malformed header: {exc}") from exc
    if min(t, h, w, c) < 1:
        raise DataError(f"malformed header: non-positive dims T={t} H={h} W={w} C={c}")
    names = header["channel_names"]
    lat = np.asarray(header["lat_deg"], dtype=np.float64)
    lon = np.asarray(header["lon_deg"], dtype=np.float64)
    if len(names) != c or lat.shape != (h,) or lon.shape != (w,):
        raise DataError("malformed header: name/coordinate lengths disagree with dims")

    payload = raw[newline + 1:]
    expected = t * h * w * c * 4
    if len(payload) != expected:
        raise DataError(f"payload size mismatch: expected {expected} bytes, got {len(payload)}")
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(t, h, w, c)
    if not np.all(np.isfinite(values)):
        raise DataError("non-finite values")
    _check_coords(lat, lon)

    frames = tuple(GridField(values[i], lat, lon, names) for i in range(t))
    return GridSeries(frames, step_hours)
