"""Shared domain types: stations, observations, folds, training entries."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from .errors import DataError, DomainError

StationId = str

# A reported dew point may exceed air temperature by sensor disagreement;
# anything past this margin is treated as invalid.
DEW_POINT_TOLERANCE = 0.5


@dataclass(frozen=True)
class GeoPoint:
    """WGS-84 coordinate in decimal degrees, longitude east and latitude north."""

    lon: float
    lat: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lon) and -180.0 <= self.lon <= 180.0):
            raise DomainError(f"longitude out of range: {self.lon!r}")
        if not (math.isfinite(self.lat) and -90.0 <= self.lat <= 90.0):
            raise DomainError(f"latitude out of range: {self.lat!r}")


@dataclass(frozen=True)
class StationAttributes:
    """Static site descriptors used both as model features and for weighting."""

    location: GeoPoint
    dem: float
    ndvi: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.dem):
            raise DomainError(f"dem must be finite: {self.dem!r}")
        if not (math.isfinite(self.ndvi) and -1.0 <= self.ndvi <= 1.0):
            raise DomainError(f"ndvi out of range: {self.ndvi!r}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.location.lon, self.location.lat, self.dem, self.ndvi)


@dataclass(frozen=True)
class ClimateObservation:
    """One timestamped sensor reading.

    ``timestamp`` is integer minutes since the Unix epoch; ``wind_dir_met``
    uses the meteorological convention (direction the wind blows from).
    Construction is permissive so that raw parses can be inspected by
    :func:`validate_series` instead of throwing mid-file.
    """

    timestamp: int
    temperature: float
    dew_point: float
    rh: float
    wind_speed: float
    wind_dir_met: float


@dataclass(frozen=True)
class Violation:
    """One invariant breach found by validate_series."""

    field: str
    index: int
    rule: str


@dataclass(frozen=True)
class StationSeries:
    """Time-ordered observations plus static attributes for one station."""

    id: StationId
    attributes: StationAttributes
    observations: tuple[ClimateObservation, ...]

    def __post_init__(self) -> None:
        if not self.id:
            raise DomainError("station id must be non-empty")
        if not isinstance(self.observations, tuple):
            object.__setattr__(self, "observations", tuple(self.observations))

    def __len__(self) -> int:
        return len(self.observations)


def observation_violations(obs: ClimateObservation, index: int = 0) -> list[Violation]:
    """Invariant breaches of a single observation, ignoring series ordering."""
    out: list[Violation] = []
    _check_observation(obs, index, out)
    return out


def _check_observation(obs: ClimateObservation, index: int, out: list[Violation]) -> None:
    for field in ("temperature", "dew_point", "rh", "wind_speed", "wind_dir_met"):
        if not math.isfinite(getattr(obs, field)):
            out.append(Violation(field, index, "finite"))
            return
    if not 0.0 <= obs.rh <= 100.0:
        out.append(Violation("rh", index, "range"))
    if obs.wind_speed < 0.0:
        out.append(Violation("wind_speed", index, "nonnegative"))
    if not 0.0 <= obs.wind_dir_met < 360.0:
        out.append(Violation("wind_dir_met", index, "range"))
    if obs.dew_point > obs.temperature + DEW_POINT_TOLERANCE:
        out.append(Violation("dew_point", index, "exceeds temperature"))


def validate_series(series: StationSeries) -> list[Violation]:
    """Report every invariant breach in a series; empty list means valid.

    Never raises: a series assembled from a messy file can always be
    inspected, and the empty series is trivially valid.
    """
    out: list[Violation] = []
    prev_ts: int | None = None
    for i, obs in enumerate(series.observations):
        _check_observation(obs, i, out)
        if prev_ts is not None and obs.timestamp <= prev_ts:
            out.append(Violation("timestamp", i, "strictly increasing"))
        prev_ts = obs.timestamp
    return out


@dataclass(frozen=True)
class FoldAssignment:
    """Disjoint groups of station ids used for leave-stations-out evaluation."""

    folds: tuple[frozenset[StationId], ...]

    def __post_init__(self) -> None:
        if not isinstance(self.folds, tuple):
            object.__setattr__(self, "folds", tuple(frozenset(f) for f in self.folds))
        total = sum(len(f) for f in self.folds)
        union: set[StationId] = set()
        for f in self.folds:
            union.update(f)
        if len(union) != total:
            raise DataError("folds must be pairwise disjoint")
        if any(len(f) == 0 for f in self.folds):
            raise DataError("folds must be non-empty")

    @property
    def n_folds(self) -> int:
        return len(self.folds)

    def all_stations(self) -> frozenset[StationId]:
        out: set[StationId] = set()
        for f in self.folds:
            out.update(f)
        return frozenset(out)

    def test_stations(self, fold: int) -> frozenset[StationId]:
        return self.folds[fold]

    def train_stations(self, fold: int) -> frozenset[StationId]:
        return self.all_stations() - self.folds[fold]

    def fold_of(self, station: StationId) -> int:
        for k, f in enumerate(self.folds):
            if station in f:
                return k
        raise KeyError(station)


#: Order of the per-observation climate features inside a training entry.
CLIMATE_FEATURE_NAMES = ("temperature", "dew_point", "rh", "n_wind", "e_wind")


@dataclass(frozen=True)
class TrainingEntry:
    """One supervised example: off-site conditions paired with an on-site label.

    ``climate`` holds the source station's reading in the order of
    :data:`CLIMATE_FEATURE_NAMES`; ``label`` is the target station's
    next-window minimum temperature. Source and target ids are kept so a
    harness can assert that held-out stations never leak into training.
    """

    source_id: StationId
    target_id: StationId
    source_attrs: StationAttributes
    target_attrs: StationAttributes
    climate: tuple[float, float, float, float, float]
    label: float

    def __post_init__(self) -> None:
        if len(self.climate) != 5:
            raise DataError(f"expected 5 climate values, got {len(self.climate)}")
        values = self.features() + (self.label,)
        if not all(math.isfinite(v) for v in values):
            raise DataError("training entry contains non-finite values")

    def features(self) -> tuple[float, ...]:
        """13-vector: source attributes, target attributes, source climate."""
        return self.source_attrs.as_tuple() + self.target_attrs.as_tuple() + tuple(self.climate)


def index_series(stations: Iterable[StationSeries]) -> dict[StationId, StationSeries]:
    """Map id -> series, rejecting duplicate ids."""
    out: dict[StationId, StationSeries] = {}
    for s in stations:
        if s.id in out:
            raise DataError(f"duplicate station id: {s.id}")
        out[s.id] = s
    return out
