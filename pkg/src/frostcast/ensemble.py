"""Per-station predictor bank and attribute-weighted aggregation.

One submodel is trained per source station, each mapping that station's
current conditions (plus both stations' static attributes) to the target
site's next-window minimum temperature. Aggregation combines the bank's
predictions by plain averaging, by attribute-distance weighting, or by
weighted frost voting.

Weights follow w_i = 1 / (a*g_i + b*d_i + c*n_i) where g, d, n are
min-max-normalized geographic, elevation, and vegetation-index distances.
The normalization bounds are frozen on the full training-station set of a
fold, so removing stations from the available set never changes the
remaining stations' unnormalized weights.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .core import FoldAssignment, GeoPoint, StationAttributes, StationId, StationSeries, index_series
from .errors import DataError, DomainError, FormatError, UnsupportedVersionError
from .features import (
    DEFAULT_HORIZON,
    ScalerStats,
    apply_scaler,
    climate_matrix,
    fit_scaler_arrays,
    invert_label,
    label_arrays,
    pair_feature_arrays,
    scale_label,
)
from .neuralnet import Network, SUBMODEL_SPEC, TrainConfig, forward_batch, init_network
from .neuralnet import load_network, save_network, train

#: Lower clamp for the weight denominator; a station matching the target in
#: every attribute would otherwise divide by zero.
WEIGHT_EPSILON = 1e-6

BANK_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class WeightCoefficients:
    """Relative importance of geographic, elevation, and NDVI distance."""

    geo: float
    dem: float
    ndvi: float

    def __post_init__(self) -> None:
        if self.geo < 0 or self.dem < 0 or self.ndvi < 0:
            raise DomainError("coefficients must be non-negative")
        if self.geo + self.dem + self.ndvi <= 0:
            raise DomainError("at least one coefficient must be positive")


#: Calibration result when no distance correlates with error at all.
FALLBACK_COEFFICIENTS = WeightCoefficients(1.0, 0.0, 0.0)

#: Published per-fold coefficient presets, keyed by fold index.
FOLD_COEFFICIENT_PRESETS: dict[int, WeightCoefficients] = {
    0: WeightCoefficients(0.1629, 0.0132, 0.0290),
    1: WeightCoefficients(0.1768, 0.0205, 0.0238),
    2: WeightCoefficients(0.1612, 0.0222, 0.0177),
    3: WeightCoefficients(0.1804, 0.0114, 0.0269),
    4: WeightCoefficients(0.1601, 0.0110, 0.0260),
}


class DistanceTriple(NamedTuple):
    geo: float
    dem: float
    ndvi: float


def station_distances(source: StationAttributes, target: StationAttributes) -> DistanceTriple:
    """Raw (geographic, elevation, NDVI) separations between two sites."""
    geo = math.hypot(source.location.lon - target.location.lon,
                     source.location.lat - target.location.lat)
    return DistanceTriple(geo, abs(source.dem - target.dem), abs(source.ndvi - target.ndvi))


@dataclass(frozen=True)
class DistanceNormalization:
    """Frozen min-max bounds for each distance dimension."""

    geo: tuple[float, float]
    dem: tuple[float, float]
    ndvi: tuple[float, float]

    def normalize(self, triples: np.ndarray, clamp: bool = True) -> np.ndarray:
        """Map raw (n, 3) distance rows into [0, 1] per dimension.

        A degenerate dimension (min == max) maps to 0. With ``clamp`` the
        output is clipped, so sites outside the frozen bounds saturate
        instead of extrapolating.
        """
        triples = np.asarray(triples, dtype=np.float64)
        out = np.empty_like(triples)
        for k, (lo, hi) in enumerate((self.geo, self.dem, self.ndvi)):
            span = hi - lo
            out[:, k] = 0.0 if span <= 0 else (triples[:, k] - lo) / span
        if clamp:
            np.clip(out, 0.0, 1.0, out=out)
        return out


def normalize_distances(triples: Sequence[DistanceTriple]) -> list[DistanceTriple]:
    """Min-max normalize a batch of raw distances over the batch itself."""
    arr = np.asarray(triples, dtype=np.float64).reshape(-1, 3)
    if arr.shape[0] == 0:
        return []
    lo, hi = arr.min(axis=0), arr.max(axis=0)
    norm = DistanceNormalization((lo[0], hi[0]), (lo[1], hi[1]), (lo[2], hi[2]))
    return [DistanceTriple(*row) for row in norm.normalize(arr, clamp=False)]


def fit_normalization(attrs: Sequence[StationAttributes]) -> DistanceNormalization:
    """Bounds over all distinct ordered pairs of the given stations."""
    if len(attrs) < 2:
        raise DataError("normalization needs at least two stations")
    triples = np.array(
        [station_distances(a, b) for i, a in enumerate(attrs) for j, b in enumerate(attrs) if i != j]
    )
    lo, hi = triples.min(axis=0), triples.max(axis=0)
    return DistanceNormalization((float(lo[0]), float(hi[0])),
                                 (float(lo[1]), float(hi[1])),
                                 (float(lo[2]), float(hi[2])))


def station_weights(
    normalized: Mapping[StationId, DistanceTriple], coefficients: WeightCoefficients
) -> dict[StationId, float]:
    """Inverse-distance-combination weights, normalized to sum to one."""
    if not normalized:
        raise DataError("no stations to weight")
    ids = sorted(normalized)
    raw = np.empty(len(ids))
    for i, sid in enumerate(ids):
        g, d, n = normalized[sid]
        denom = coefficients.geo * g + coefficients.dem * d + coefficients.ndvi * n
        raw[i] = 1.0 / max(denom, WEIGHT_EPSILON)
    raw /= raw.sum()
    return dict(zip(ids, raw))


def unnormalized_weight(triple: DistanceTriple, coefficients: WeightCoefficients) -> float:
    """Single-station weight before the sum-to-one normalization."""
    denom = coefficients.geo * triple.geo + coefficients.dem * triple.dem + coefficients.ndvi * triple.ndvi
    return 1.0 / max(denom, WEIGHT_EPSILON)


@dataclass
class SubmodelBank:
    """Everything needed to predict at arbitrary sites for one fold."""

    fold: int
    horizon: int
    models: dict[StationId, Network]
    scalers: dict[StationId, ScalerStats]
    station_attrs: dict[StationId, StationAttributes]
    coefficients: WeightCoefficients
    normalization: DistanceNormalization

    @property
    def station_ids(self) -> list[StationId]:
        return sorted(self.models)

    def __len__(self) -> int:
        return len(self.models)

    def predict_batch(
        self, source_id: StationId, climate: np.ndarray, target_attrs: StationAttributes
    ) -> np.ndarray:
        """Predictions from one submodel for an (n, 5) climate block."""
        if source_id not in self.models:
            raise DataError(f"unknown source station: {source_id}")
        climate = np.asarray(climate, dtype=np.float64)
        if climate.ndim != 2 or climate.shape[1] != 5:
            raise DataError(f"expected (n, 5) climate block, got {climate.shape}")
        x = np.empty((climate.shape[0], 13), dtype=np.float64)
        x[:, 0:4] = self.station_attrs[source_id].as_tuple()
        x[:, 4:8] = target_attrs.as_tuple()
        x[:, 8:13] = climate
        scaler = self.scalers[source_id]
        scaled = forward_batch(self.models[source_id], apply_scaler(scaler, x))
        return np.asarray(invert_label(scaler, scaled), dtype=np.float64)

    def weights_for_target(
        self, target_attrs: StationAttributes, available: Iterable[StationId] | None = None
    ) -> dict[StationId, float]:
        """Per-station weights at a target site, summing to one.

        Restricting ``available`` and renormalizing is exactly equivalent to
        computing on the subset directly because the min-max bounds are
        frozen per fold.
        """
        ids = self.station_ids if available is None else sorted(available)
        if not ids:
            raise DataError("no stations available for weighting")
        unknown = [i for i in ids if i not in self.models]
        if unknown:
            raise DataError(f"stations not in bank: {unknown}")
        raw = np.array([station_distances(self.station_attrs[i], target_attrs) for i in ids])
        norm = self.normalization.normalize(raw)
        w = np.empty(len(ids))
        for k in range(len(ids)):
            denom = (self.coefficients.geo * norm[k, 0]
                     + self.coefficients.dem * norm[k, 1]
                     + self.coefficients.ndvi * norm[k, 2])
            w[k] = 1.0 / max(denom, WEIGHT_EPSILON)
        w /= w.sum()
        return dict(zip(ids, w))


def predict_single(
    bank: SubmodelBank,
    source_id: StationId,
    climate: Sequence[float],
    target_attrs: StationAttributes,
) -> float:
    """One submodel's estimate of the target's next-window minimum."""
    climate = np.asarray(climate, dtype=np.float64)
    if climate.shape != (5,):
        raise DataError(f"expected 5 climate values, got shape {climate.shape}")
    return float(bank.predict_batch(source_id, climate[None, :], target_attrs)[0])


def aggregate_average(predictions: Mapping[StationId, float]) -> float:
    if not predictions:
        raise DataError("cannot aggregate zero predictions")
    return float(np.mean(list(predictions.values())))


def aggregate_weighted(
    predictions: Mapping[StationId, float], weights: Mapping[StationId, float]
) -> float:
    """Weighted mean over whichever stations actually produced predictions."""
    if not predictions:
        raise DataError("cannot aggregate zero predictions")
    missing = set(predictions) - set(weights)
    if missing:
        raise DataError(f"no weight for stations: {sorted(missing)}")
    ids = list(predictions)
    w = np.array([weights[i] for i in ids], dtype=np.float64)
    total = w.sum()
    if total <= 0:
        raise DataError("available weights sum to zero")
    p = np.array([predictions[i] for i in ids], dtype=np.float64)
    return float((w @ p) / total)


class VoteResult(NamedTuple):
    frost: bool
    score: float


def aggregate_vote(
    predictions: Mapping[StationId, float],
    weights: Mapping[StationId, float],
    trigger: float = 0.0,
) -> VoteResult:
    """Weighted frost vote: +1 below the trigger, -1 otherwise.

    The tie (score exactly zero) counts as frost; a missed frost is the
    expensive mistake, so ambiguity resolves toward warning.
    """
    if not predictions:
        raise DataError("cannot aggregate zero predictions")
    missing = set(predictions) - set(weights)
    if missing:
        raise DataError(f"no weight for stations: {sorted(missing)}")
    ids = list(predictions)
    w = np.array([weights[i] for i in ids], dtype=np.float64)
    total = w.sum()
    if total <= 0:
        raise DataError("available weights sum to zero")
    votes = np.where(np.array([predictions[i] for i in ids]) < trigger, 1.0, -1.0)
    score = float((w @ votes) / total)
    return VoteResult(score >= 0.0, score)


def _child_seed(base: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((base, index)))


def train_bank(
    stations: Sequence[StationSeries],
    folds: FoldAssignment,
    fold: int,
    cfg: TrainConfig | None = None,
    horizon: int = DEFAULT_HORIZON,
    entry_stride: int = 1,
    max_entries: int | None = None,
    coefficients: WeightCoefficients | None = None,
    progress: bool = False,
) -> SubmodelBank:
    """Train one submodel per training station of ``fold``.

    Each submodel learns from every other training station's labels; the
    fold's held-out stations contribute nothing, which is asserted on the
    assembled examples. ``entry_stride`` thins the label stream before the
    join and ``max_entries`` caps the per-submodel corpus by a seeded draw.
    """
    if not 0 <= fold < folds.n_folds:
        raise DomainError(f"fold index out of range: {fold}")
    cfg = cfg or TrainConfig()
    by_id = index_series(stations)
    train_ids = sorted(folds.train_stations(fold) & set(by_id))
    test_ids = folds.test_stations(fold)
    if len(train_ids) < 2:
        raise DataError("need at least two training stations")

    normalization = fit_normalization([by_id[i].attributes for i in train_ids])
    models: dict[StationId, Network] = {}
    scalers: dict[StationId, ScalerStats] = {}
    for idx, source_id in enumerate(train_ids):
        source = by_id[source_id]
        assert source_id not in test_ids
        blocks_x, blocks_y = [], []
        for target_id in train_ids:
            if target_id == source_id:
                continue
            assert target_id not in test_ids
            x, y, _ = pair_feature_arrays(source, by_id[target_id], horizon, stride=entry_stride)
            if x.shape[0]:
                blocks_x.append(x)
                blocks_y.append(y)
        if not blocks_x:
            raise DataError(f"station {source_id} shares no timestamps with any target")
        x = np.concatenate(blocks_x)
        y = np.concatenate(blocks_y)
        if max_entries is not None and x.shape[0] > max_entries:
            keep = _child_seed(cfg.seed, idx).choice(x.shape[0], size=max_entries, replace=False)
            keep.sort()
            x, y = x[keep], y[keep]
        scaler = fit_scaler_arrays(x, y)
        net = init_network(SUBMODEL_SPEC, seed=int(cfg.seed * 100003 + idx))
        net, _ = train(net, apply_scaler(scaler, x), np.asarray(scale_label(scaler, y)), cfg)
        models[source_id] = net
        scalers[source_id] = scaler
        if progress:
            print(f"trained {source_id} on {x.shape[0]} entries")
    attrs = {i: by_id[i].attributes for i in train_ids}
    return SubmodelBank(
        fold=fold,
        horizon=horizon,
        models=models,
        scalers=scalers,
        station_attrs=attrs,
        coefficients=coefficients or FALLBACK_COEFFICIENTS,
        normalization=normalization,
    )


def calibrate_coefficients(
    bank: SubmodelBank,
    stations: Sequence[StationSeries],
    stride: int = 1,
) -> WeightCoefficients:
    """Derive (geo, dem, ndvi) coefficients from error-distance correlation.

    For every (submodel, validation target) pair the per-prediction absolute
    error is correlated against each normalized distance; the coefficient is
    the magnitude of the Pearson correlation. If all three vanish the
    fallback (1, 0, 0) applies.
    """
    if stride < 1:
        raise DomainError(f"stride must be >= 1: {stride!r}")
    by_id = index_series(stations)
    source_ids = [sid for sid in bank.station_ids if sid in by_id]
    if not source_ids:
        raise DataError("none of the bank's source stations have series to calibrate on")
    source_obs: dict[StationId, object] = {}
    dist_rows: list[np.ndarray] = []
    err_blocks: list[np.ndarray] = []
    for target in stations:
        lab_ts, labels = label_arrays(target, bank.horizon)
        if stride > 1:
            lab_ts, labels = lab_ts[::stride], labels[::stride]
        if lab_ts.size == 0:
            continue
        for source_id in source_ids:
            if source_id == target.id:
                continue
            if source_id not in source_obs:
                source_obs[source_id] = climate_matrix(by_id[source_id])
            obs = source_obs[source_id]
            common, src_idx, lab_idx = np.intersect1d(obs.timestamps, lab_ts, return_indices=True)
            if common.size == 0:
                continue
            preds = bank.predict_batch(source_id, obs.climate[src_idx], target.attributes)
            errors = np.abs(preds - labels[lab_idx])
            raw = np.asarray(station_distances(bank.station_attrs[source_id], target.attributes))
            norm = bank.normalization.normalize(raw[None, :])[0]
            dist_rows.append(np.broadcast_to(norm, (errors.size, 3)))
            err_blocks.append(errors)
    if not err_blocks:
        raise DataError("no overlapping observations to calibrate on")
    dists = np.concatenate(dist_rows)
    errors = np.concatenate(err_blocks)
    geo = abs(pearson(dists[:, 0], errors))
    dem = abs(pearson(dists[:, 1], errors))
    ndvi = abs(pearson(dists[:, 2], errors))
    if geo + dem + ndvi == 0.0:
        return FALLBACK_COEFFICIENTS
    return WeightCoefficients(geo, dem, ndvi)


def save_bank(
    bank: SubmodelBank,
    directory: str | os.PathLike,
    baselines: Mapping[StationId, tuple[Network, ScalerStats]] | None = None,
    baseline_train_fraction: float = 0.8,
) -> None:
    """Persist a bank as one JSON model file per station plus a manifest.

    On-site reference models for held-out stations can ride along; they are
    stored under ``baseline_<id>.json`` and listed in the manifest together
    with the chronological split fraction they were trained on.
    """
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": BANK_SCHEMA_VERSION,
        "fold": bank.fold,
        "horizon": bank.horizon,
        "coefficients": {
            "geo": bank.coefficients.geo,
            "dem": bank.coefficients.dem,
            "ndvi": bank.coefficients.ndvi,
        },
        "normalization": {
            "geo": list(bank.normalization.geo),
            "dem": list(bank.normalization.dem),
            "ndvi": list(bank.normalization.ndvi),
        },
        "stations": [
            {
                "id": sid,
                "lon": a.location.lon,
                "lat": a.location.lat,
                "dem": a.dem,
                "ndvi": a.ndvi,
            }
            for sid, a in sorted(bank.station_attrs.items())
        ],
        "baseline_ids": sorted(baselines) if baselines else [],
        "baseline_train_fraction": baseline_train_fraction,
    }
    with open(path / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
    for sid in bank.station_ids:
        save_network(bank.models[sid], path / f"submodel_{sid}.json", bank.scalers[sid])
    if baselines:
        for sid, (net, scaler) in baselines.items():
            save_network(net, path / f"baseline_{sid}.json", scaler)


def load_bank(directory: str | os.PathLike) -> SubmodelBank:
    path = Path(directory)
    manifest_path = path / "manifest.json"
    if not manifest_path.exists():
        raise FormatError(f"no manifest.json in {path}")
    try:
        with open(manifest_path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed manifest: {exc}") from exc
    if manifest.get("version") != BANK_SCHEMA_VERSION:
        raise UnsupportedVersionError(f"unsupported bank version: {manifest.get('version')!r}")
    try:
        coeff = WeightCoefficients(**manifest["coefficients"])
        norm = DistanceNormalization(
            tuple(manifest["normalization"]["geo"]),
            tuple(manifest["normalization"]["dem"]),
            tuple(manifest["normalization"]["ndvi"]),
        )
        attrs = {
            row["id"]: StationAttributes(GeoPoint(row["lon"], row["lat"]), row["dem"], row["ndvi"])
            for row in manifest["stations"]
        }
        fold = int(manifest["fold"])
        horizon = int(manifest["horizon"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed manifest: {exc}") from exc
    models: dict[StationId, Network] = {}
    scalers: dict[StationId, ScalerStats] = {}
    for sid in attrs:
        net, scaler = load_network(path / f"submodel_{sid}.json")
        if scaler is None:
            raise FormatError(f"submodel {sid} is missing its scaler")
        models[sid] = net
        scalers[sid] = scaler
    return SubmodelBank(
        fold=fold,
        horizon=horizon,
        models=models,
        scalers=scalers,
        station_attrs=attrs,
        coefficients=coeff,
        normalization=norm,
    )


def load_baselines(directory: str | os.PathLike) -> dict[StationId, tuple[Network, ScalerStats]]:
    """The on-site reference models stored beside a bank, possibly none."""
    path = Path(directory)
    try:
        with open(path / "manifest.json", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read manifest: {exc}") from exc
    out: dict[StationId, tuple[Network, ScalerStats]] = {}
    for sid in manifest.get("baseline_ids", []):
        net, scaler = load_network(path / f"baseline_{sid}.json")
        if scaler is None:
            raise FormatError(f"baseline {sid} is missing its scaler")
        out[sid] = (net, scaler)
    return out


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson correlation; 0.0 when either side has fewer than 2 distinct values."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size != y.size:
        raise DataError("correlation inputs must have equal length")
    if x.size < 2 or np.all(x == x[0]) or np.all(y == y[0]):
        return 0.0
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float(xc @ xc) * float(yc @ yc))
    if denom == 0.0 or not math.isfinite(denom):
        return 0.0
    return float((xc @ yc) / denom)
