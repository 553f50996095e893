"""Latitude-weighted verification metrics and reference baselines.

Weights are cosine-of-latitude normalized to unit mean, so a spatially
uniform error of e has weighted RMSE exactly e.  RMSE takes the root
inside the per-sample average; ACC correlates anomalies against a
caller-supplied climatology in one joint sum over samples and grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ShapeError
from .grid import GridSeries

__all__ = ["LatWeights", "lat_weights", "rmse_weighted", "acc", "climatology",
           "persistence_baseline", "climatology_baseline"]


@dataclass(frozen=True)
class LatWeights:
    """Per-row area weights L(h) with mean exactly one."""

    weights: np.ndarray
    lat_deg: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))
        object.__setattr__(self, "lat_deg", np.asarray(self.lat_deg, dtype=np.float64))
        if np.any(self.weights <= 0):
            raise DataError("latitude weights must be positive")


def lat_weights(lat_deg: np.ndarray) -> LatWeights:
    """cos(latitude) normalized by its mean across rows."""
    lat = np.asarray(lat_deg, dtype=np.float64)
    if np.any(np.abs(lat) >= 90.0):
        raise DataError(f"latitudes must lie strictly inside (-90, 90), got {lat}")
    cos = np.cos(np.deg2rad(lat))
    return LatWeights(cos / cos.mean(), lat)


def _as_samples(x) -> np.ndarray:
    """Coerce a trajectory (sequence of fields or array) to [M, H, W, C]."""
    if isinstance(x, np.ndarray):
        arr = x
    else:
        arr = np.stack([getattr(f, "values", f) for f in x])
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4:
        raise ShapeError(f"expected [M, H, W, C] samples, got shape {arr.shape}")
    return arr.astype(np.float64)


def rmse_weighted(pred, truth, w: LatWeights) -> np.ndarray:
    """Latitude-weighted RMSE per channel: the root of the weighted
    spatial mean square error, averaged over samples."""
    p, t = _as_samples(pred), _as_samples(truth)
    if p.shape != t.shape:
        raise ShapeError(f"shape mismatch: pred {p.shape} vs truth {t.shape}")
    if p.shape[1] != w.weights.shape[0]:
        raise ShapeError(f"{p.shape[1]} rows vs {w.weights.shape[0]} weights")
    sq = (p - t) ** 2 * w.weights[None, :, None, None]
    return np.sqrt(sq.mean(axis=(1, 2))).mean(axis=0)


def acc(pred, truth, clim: np.ndarray, w: LatWeights) -> np.ndarray:
    """Anomaly correlation coefficient per channel, in [-1, 1].

    Anomalies subtract the climatology; numerator and denominators sum
    jointly over samples and grid.  Raises on zero anomaly energy.
    """
    p, t = _as_samples(pred), _as_samples(truth)
    if p.shape != t.shape:
        raise ShapeError(f"shape mismatch: pred {p.shape} vs truth {t.shape}")
    if clim.shape != p.shape[1:]:
        raise ShapeError(f"climatology shape {clim.shape} != field shape {p.shape[1:]}")
    wts = w.weights[None, :, None, None]
    pa = p - clim
    ta = t - clim
    num = (wts * pa * ta).sum(axis=(0, 1, 2))
    den_p = (wts * pa * pa).sum(axis=(0, 1, 2))
    den_t = (wts * ta * ta).sum(axis=(0, 1, 2))
    if np.any(den_p <= 0) or np.any(den_t <= 0):
        raise DataError("undefined ACC: zero anomaly in prediction or truth")
    return num / np.sqrt(den_p * den_t)


def climatology(reference: GridSeries | np.ndarray) -> np.ndarray:
    """Temporal mean of a reference series, shape [H, W, C]."""
    vals = reference.values if isinstance(reference, GridSeries) else np.asarray(reference)
    return vals.mean(axis=0)


def persistence_baseline(series: GridSeries, steps: int) -> np.ndarray:
    """Repeat the last observed frame ``steps`` times: [T, H, W, C]."""
    return np.repeat(series.frames[-1].values[None], steps, axis=0)


def climatology_baseline(clim: np.ndarray, steps: int) -> np.ndarray:
    """Repeat the climatology ``steps`` times: [T, H, W, C]."""
    return np.repeat(np.asarray(clim)[None], steps, axis=0)
