"""Feature engineering: wind decomposition, labels, pair assembly, scaling.

Wind directions arrive in the meteorological convention (degrees the wind
blows *from*). They are first flipped to the direction of travel and then
split into east/north velocity components so the learner sees continuous
inputs instead of a circular coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .core import StationSeries, TrainingEntry
from .errors import DataError, DomainError

DEFAULT_HORIZON = 60


def reverse_direction(met_deg: float) -> float:
    """Flip a meteorological direction to the direction of travel."""
    if not 0.0 <= met_deg < 360.0:
        raise DomainError(f"wind direction outside [0, 360): {met_deg!r}")
    return met_deg + 180.0 if met_deg < 180.0 else met_deg - 180.0


class WindComponents(NamedTuple):
    e_wind: float
    n_wind: float


def wind_to_components(met_deg: float, speed: float) -> WindComponents:
    """Decompose a (direction-from, speed) pair into east/north velocities."""
    if speed < 0.0:
        raise DomainError(f"wind speed must be non-negative: {speed!r}")
    deg = np.radians(reverse_direction(met_deg))
    return WindComponents(float(speed * np.sin(deg)), float(speed * np.cos(deg)))


def _wind_component_arrays(met_deg: np.ndarray, speed: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if met_deg.size and (met_deg.min() < 0.0 or met_deg.max() >= 360.0):
        raise DomainError("wind direction outside [0, 360)")
    if speed.size and speed.min() < 0.0:
        raise DomainError("wind speed must be non-negative")
    deg = np.where(met_deg < 180.0, met_deg + 180.0, met_deg - 180.0)
    rad = np.radians(deg)
    return speed * np.sin(rad), speed * np.cos(rad)


class ObservationArrays(NamedTuple):
    """Column view of a series; climate is (n, 5) in training-entry order."""

    timestamps: np.ndarray
    climate: np.ndarray


def climate_matrix(series: StationSeries) -> ObservationArrays:
    """Extract timestamps and the 5-column climate block from a series."""
    n = len(series.observations)
    ts = np.empty(n, dtype=np.int64)
    raw = np.empty((n, 5), dtype=np.float64)
    for i, obs in enumerate(series.observations):
        ts[i] = obs.timestamp
        raw[i, 0] = obs.temperature
        raw[i, 1] = obs.dew_point
        raw[i, 2] = obs.rh
        raw[i, 3] = obs.wind_speed
        raw[i, 4] = obs.wind_dir_met
    e_wind, n_wind = _wind_component_arrays(raw[:, 4], raw[:, 3])
    climate = np.column_stack([raw[:, 0], raw[:, 1], raw[:, 2], n_wind, e_wind])
    return ObservationArrays(ts, climate)


def label_arrays(series: StationSeries, horizon: int = DEFAULT_HORIZON) -> tuple[np.ndarray, np.ndarray]:
    """Next-window minimum labels as (timestamps, labels) arrays.

    The label at index t is the minimum temperature over indices
    t+1 .. t+horizon; trailing indices without a full window get none.
    """
    if horizon < 1:
        raise DomainError(f"horizon must be >= 1: {horizon!r}")
    n = len(series.observations)
    if n <= horizon:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)
    ts = np.fromiter((o.timestamp for o in series.observations), dtype=np.int64, count=n)
    temps = np.fromiter((o.temperature for o in series.observations), dtype=np.float64, count=n)
    windows = np.lib.stride_tricks.sliding_window_view(temps[1:], horizon)
    return ts[: n - horizon], windows.min(axis=1)


def label_next_hour_min(series: StationSeries, horizon: int = DEFAULT_HORIZON) -> list[tuple[int, float]]:
    """List form of :func:`label_arrays` for small-scale use."""
    ts, labels = label_arrays(series, horizon)
    return [(int(t), float(v)) for t, v in zip(ts, labels)]


def pair_feature_arrays(
    source: StationSeries,
    target: StationSeries,
    horizon: int = DEFAULT_HORIZON,
    stride: int = 1,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Assemble the (n, 13) feature matrix and label vector for one pair.

    Rows exist only where a source observation and a target label share an
    exact timestamp; nothing is imputed. ``stride`` keeps every stride-th
    label before the join, which thins near-duplicate minutes when a pair
    corpus would otherwise be enormous.
    """
    if stride < 1:
        raise DomainError(f"stride must be >= 1: {stride!r}")
    lab_ts, labels = label_arrays(target, horizon)
    if stride > 1:
        lab_ts, labels = lab_ts[::stride], labels[::stride]
    src = climate_matrix(source)
    common, src_idx, lab_idx = np.intersect1d(src.timestamps, lab_ts, return_indices=True)
    n = common.size
    x = np.empty((n, 13), dtype=np.float64)
    x[:, 0:4] = source.attributes.as_tuple()
    x[:, 4:8] = target.attributes.as_tuple()
    x[:, 8:13] = src.climate[src_idx]
    return x, labels[lab_idx], common


def build_pair_entries(
    source: StationSeries,
    target: StationSeries,
    horizon: int = DEFAULT_HORIZON,
) -> list[TrainingEntry]:
    """Materialize one pair's examples as TrainingEntry objects."""
    x, y, _ = pair_feature_arrays(source, target, horizon)
    return [
        TrainingEntry(
            source_id=source.id,
            target_id=target.id,
            source_attrs=source.attributes,
            target_attrs=target.attributes,
            climate=tuple(row[8:13]),
            label=float(label),
        )
        for row, label in zip(x, y)
    ]


def baseline_feature_arrays(
    series: StationSeries,
    horizon: int = DEFAULT_HORIZON,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """On-site variant: 5 climate features predicting the station's own label."""
    lab_ts, labels = label_arrays(series, horizon)
    obs = climate_matrix(series)
    return obs.climate[: lab_ts.size].copy(), labels, lab_ts


def entries_to_arrays(entries: Sequence[TrainingEntry]) -> tuple[np.ndarray, np.ndarray]:
    if not entries:
        raise DataError("no training entries")
    x = np.array([e.features() for e in entries], dtype=np.float64)
    y = np.array([e.label for e in entries], dtype=np.float64)
    return x, y


@dataclass(frozen=True)
class ScalerStats:
    """Per-column standardization parameters plus the label's own pair."""

    mean: tuple[float, ...]
    sd: tuple[float, ...]
    label_mean: float
    label_sd: float

    def __post_init__(self) -> None:
        if len(self.mean) != len(self.sd):
            raise DataError("mean/sd length mismatch")
        if any(s <= 0 for s in self.sd) or self.label_sd <= 0:
            raise DataError("scaler sds must be positive")


def fit_scaler_arrays(x: np.ndarray, y: np.ndarray) -> ScalerStats:
    if x.shape[0] == 0:
        raise DataError("cannot fit a scaler on zero entries")
    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    sd[(sd == 0.0) | ~np.isfinite(sd)] = 1.0
    label_sd = float(y.std())
    if label_sd == 0.0 or not np.isfinite(label_sd):
        label_sd = 1.0
    return ScalerStats(tuple(map(float, mean)), tuple(map(float, sd)), float(y.mean()), label_sd)


def fit_scaler(entries: Sequence[TrainingEntry]) -> ScalerStats:
    """Standardization statistics over a batch of entries."""
    x, y = entries_to_arrays(entries)
    return fit_scaler_arrays(x, y)


def apply_scaler(stats: ScalerStats, features: np.ndarray) -> np.ndarray:
    """Standardize a feature vector or matrix; finite in, finite out."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[-1] != len(stats.mean):
        raise DataError(
            f"feature width {features.shape[-1]} does not match scaler width {len(stats.mean)}"
        )
    return (features - np.asarray(stats.mean)) / np.asarray(stats.sd)


def scale_label(stats: ScalerStats, label: np.ndarray | float) -> np.ndarray | float:
    return (np.asarray(label, dtype=np.float64) - stats.label_mean) / stats.label_sd


def invert_label(stats: ScalerStats, scaled: np.ndarray | float) -> np.ndarray | float:
    return np.asarray(scaled, dtype=np.float64) * stats.label_sd + stats.label_mean
