"""Cross-validation harness, accuracy metrics, and the paired t-test.

Stations are split into folds, a submodel bank is trained on each fold's
training side, and aggregated predictions at held-out stations are scored
by RMSE plus frost-event true-positive and false-discovery rates. The
station-count ablation reuses one full prediction matrix and re-aggregates
over seeded subsets, so every method sees identical draws at a given size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import FoldAssignment, StationId, StationSeries, index_series
from .ensemble import SubmodelBank
from .errors import DataError, DomainError
from .features import (
    DEFAULT_HORIZON,
    ScalerStats,
    apply_scaler,
    baseline_feature_arrays,
    climate_matrix,
    fit_scaler_arrays,
    invert_label,
    label_arrays,
    scale_label,
)
from .geostats import VariogramModel, aggregate_by_interpolation
from .neuralnet import Network, ONSITE_SPEC, TrainConfig, forward_batch, init_network, train

DEFAULT_TRIGGER = 0.0

METHODS = ("average", "weighted_average", "weighted_vote", "idw", "ok", "baseline")


def make_folds(station_ids: Sequence[StationId], seed: int, n_folds: int = 5) -> FoldAssignment:
    """Seeded shuffle then round-robin assignment into ``n_folds`` groups."""
    ids = sorted(set(station_ids))
    if len(ids) != len(station_ids):
        raise DataError("station ids must be unique")
    if n_folds < 2:
        raise DomainError(f"n_folds must be >= 2: {n_folds!r}")
    if len(ids) < n_folds:
        raise DataError(f"need at least {n_folds} stations, got {len(ids)}")
    order = np.random.default_rng(seed).permutation(len(ids))
    groups: list[set[StationId]] = [set() for _ in range(n_folds)]
    for pos, idx in enumerate(order):
        groups[pos % n_folds].add(ids[idx])
    return FoldAssignment(tuple(frozenset(g) for g in groups))


def rmse(predicted: Sequence[float], actual: Sequence[float]) -> float:
    p = np.asarray(predicted, dtype=np.float64)
    a = np.asarray(actual, dtype=np.float64)
    if p.shape != a.shape or p.ndim != 1:
        raise DataError(f"rmse inputs must be equal-length vectors, got {p.shape} / {a.shape}")
    if p.size == 0:
        raise DataError("rmse of zero predictions is undefined")
    return float(np.sqrt(np.mean((p - a) ** 2)))


@dataclass(frozen=True)
class ConfusionCounts:
    """Frost-event confusion cells; rates stay None when undefined."""

    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def tpr(self) -> float | None:
        denom = self.tp + self.fn
        return self.tp / denom if denom else None

    @property
    def fdr(self) -> float | None:
        denom = self.tp + self.fp
        return self.fp / denom if denom else None


def event_confusion(
    predicted: Sequence[float] | Sequence[bool] | np.ndarray,
    actual: Sequence[float] | np.ndarray,
    trigger: float = DEFAULT_TRIGGER,
) -> ConfusionCounts:
    """Frost confusion counts; an event is a value strictly below the trigger.

    ``predicted`` may be temperatures or boolean decisions (as produced by
    the voting aggregator).
    """
    p = np.asarray(predicted)
    a = np.asarray(actual, dtype=np.float64)
    if p.shape != a.shape or p.ndim != 1:
        raise DataError(f"confusion inputs must be equal-length vectors, got {p.shape} / {a.shape}")
    pred_event = p if p.dtype == np.bool_ else np.asarray(p, dtype=np.float64) < trigger
    actual_event = a < trigger
    tp = int(np.sum(pred_event & actual_event))
    fp = int(np.sum(pred_event & ~actual_event))
    fn = int(np.sum(~pred_event & actual_event))
    tn = int(np.sum(~pred_event & ~actual_event))
    return ConfusionCounts(tp, fp, fn, tn)


# --- paired t-test -----------------------------------------------------------

_BETACF_MAX_ITER = 300
_BETACF_EPS = 3e-16
_BETACF_TINY = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETACF_TINY:
        d = _BETACF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_TINY:
            d = _BETACF_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETACF_TINY:
            c = _BETACF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_TINY:
            d = _BETACF_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETACF_TINY:
            c = _BETACF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            return h
    return h


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if not (a > 0 and b > 0):
        raise DomainError("beta parameters must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def paired_t_test(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Two-sided paired t-test; returns (t statistic, p-value).

    Degenerate inputs follow fixed conventions: identical vectors give
    (0, 1); a constant nonzero difference gives p = 0 with an infinite
    statistic; p-values that underflow double precision report as 0.0.
    """
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise DataError(f"paired test needs equal-length vectors, got {xa.shape} / {ya.shape}")
    n = xa.size
    if n < 2:
        raise DataError("paired test needs at least two pairs")
    d = xa - ya
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if np.all(d == 0.0):
        return 0.0, 1.0
    if sd == 0.0:
        return math.copysign(math.inf, mean), 0.0
    t = mean / (sd / math.sqrt(n))
    dof = n - 1
    p = regularized_incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t))
    if p < 1e-300:
        p = 0.0
    return t, min(max(p, 0.0), 1.0)


# --- baseline (on-site) models ----------------------------------------------


@dataclass(frozen=True)
class BaselineModel:
    """On-site model plus the index where its held-out slice begins."""

    network: Network
    scaler: ScalerStats
    split_index: int


def train_baselines(
    stations: Sequence[StationSeries],
    ids: Sequence[StationId],
    cfg: TrainConfig | None = None,
    horizon: int = DEFAULT_HORIZON,
    train_fraction: float = 0.8,
) -> dict[StationId, BaselineModel]:
    """Train one on-site reference model per listed station.

    The earliest ``train_fraction`` of each station's labeled rows is used
    for fitting; everything after the split index is reserved for scoring.
    """
    if not 0.0 < train_fraction < 1.0:
        raise DomainError(f"train_fraction must be in (0, 1): {train_fraction!r}")
    cfg = cfg or TrainConfig()
    by_id = index_series(stations)
    out: dict[StationId, BaselineModel] = {}
    for idx, sid in enumerate(sorted(ids)):
        if sid not in by_id:
            raise DataError(f"no series for station {sid}")
        x, y, _ = baseline_feature_arrays(by_id[sid], horizon)
        if x.shape[0] < 10:
            raise DataError(f"station {sid} has too few labeled rows for a baseline")
        split = int(x.shape[0] * train_fraction)
        scaler = fit_scaler_arrays(x[:split], y[:split])
        net = init_network(ONSITE_SPEC, seed=int(cfg.seed * 99991 + idx))
        net, _ = train(
            net, apply_scaler(scaler, x[:split]), np.asarray(scale_label(scaler, y[:split])), cfg
        )
        out[sid] = BaselineModel(net, scaler, split)
    return out


def evaluate_baselines(
    baselines: Mapping[StationId, BaselineModel],
    stations: Sequence[StationSeries],
    horizon: int = DEFAULT_HORIZON,
    trigger: float = DEFAULT_TRIGGER,
) -> tuple[np.ndarray, np.ndarray]:
    """Pooled (predictions, labels) over every baseline's held-out slice."""
    by_id = index_series(stations)
    preds: list[np.ndarray] = []
    labels: list[np.ndarray] = []
    for sid, model in sorted(baselines.items()):
        x, y, _ = baseline_feature_arrays(by_id[sid], horizon)
        xs = x[model.split_index:]
        ys = y[model.split_index:]
        if xs.shape[0] == 0:
            continue
        scaled = forward_batch(model.network, apply_scaler(model.scaler, xs))
        preds.append(np.asarray(invert_label(model.scaler, scaled), dtype=np.float64))
        labels.append(ys)
    if not preds:
        raise DataError("baselines have no held-out rows to score")
    return np.concatenate(preds), np.concatenate(labels)


# --- fold experiment and station-count ablation ------------------------------


@dataclass(frozen=True)
class AblationResult:
    """Metrics for one (method, station count) cell of an experiment."""

    method: str
    station_count: int
    fold: int
    seed: int
    rmse: float | None
    tpr: float | None
    fdr: float | None
    n_predictions: int
    n_events: int

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "station_count": self.station_count,
            "fold": self.fold,
            "seed": self.seed,
            "rmse": self.rmse,
            "tpr": self.tpr,
            "fdr": self.fdr,
            "n_predictions": self.n_predictions,
            "n_events": self.n_events,
        }


@dataclass
class PredictionMatrix:
    """All submodel predictions at one target station.

    ``values[i, t]`` is source ``source_ids[i]``'s prediction for label
    timestamp ``t``; NaN marks source observations missing at that minute.
    """

    target_id: StationId
    source_ids: list[StationId]
    timestamps: np.ndarray
    labels: np.ndarray
    values: np.ndarray


def build_prediction_matrices(
    data: Sequence[StationSeries],
    bank: SubmodelBank,
    target_ids: Sequence[StationId],
    horizon: int | None = None,
) -> list[PredictionMatrix]:
    """Run every submodel against every target once; methods share the result."""
    horizon = bank.horizon if horizon is None else horizon
    by_id = index_series(data)
    source_ids = bank.station_ids
    source_obs = {sid: climate_matrix(by_id[sid]) for sid in source_ids if sid in by_id}
    if len(source_obs) != len(source_ids):
        missing = sorted(set(source_ids) - set(source_obs))
        raise DataError(f"no series for bank stations: {missing}")
    out: list[PredictionMatrix] = []
    for tid in sorted(target_ids):
        if tid not in by_id:
            raise DataError(f"no series for target station {tid}")
        target = by_id[tid]
        lab_ts, labels = label_arrays(target, horizon)
        values = np.full((len(source_ids), lab_ts.size), np.nan)
        for i, sid in enumerate(source_ids):
            obs = source_obs[sid]
            common, src_idx, lab_idx = np.intersect1d(obs.timestamps, lab_ts, return_indices=True)
            if common.size == 0:
                continue
            values[i, lab_idx] = bank.predict_batch(sid, obs.climate[src_idx], target.attributes)
        out.append(PredictionMatrix(tid, list(source_ids), lab_ts, labels, values))
    return out


def _masked_weighted_mean(
    vals: np.ndarray, avail: np.ndarray, weights: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Column-wise weighted mean over available rows; returns (mean, valid)."""
    w = weights[:, None] * avail
    total = w.sum(axis=0)
    valid = total > 0
    safe_total = np.where(valid, total, 1.0)
    mean = (w * np.where(avail, vals, 0.0)).sum(axis=0) / safe_total
    return mean, valid


def _idw_weights(pm: PredictionMatrix, subset: np.ndarray, bank: SubmodelBank,
                 target_attrs, power: float) -> np.ndarray:
    from .geostats import EXACT_DISTANCE

    t = target_attrs.location
    d = np.array([
        math.hypot(bank.station_attrs[pm.source_ids[i]].location.lon - t.lon,
                   bank.station_attrs[pm.source_ids[i]].location.lat - t.lat)
        for i in subset
    ])
    exact = d < EXACT_DISTANCE
    if exact.any():
        return exact.astype(np.float64)
    return d ** -power


def _ok_series(
    pm: PredictionMatrix,
    subset: np.ndarray,
    bank: SubmodelBank,
    target_attrs,
    model: VariogramModel,
) -> tuple[np.ndarray, np.ndarray]:
    """Kriging aggregate per timestep, grouping columns by availability."""
    from .core import GeoPoint
    from .geostats import SamplePoint, kriging_weights

    vals = pm.values[subset]
    avail = ~np.isnan(vals)
    n_t = vals.shape[1]
    pred = np.full(n_t, np.nan)
    valid = np.zeros(n_t, dtype=bool)
    patterns, inverse = np.unique(avail.T, axis=0, return_inverse=True)
    target = target_attrs.location
    for p_idx, pattern in enumerate(patterns):
        cols = np.nonzero(inverse == p_idx)[0]
        rows = np.nonzero(pattern)[0]
        if rows.size < 2:
            continue
        points = [
            SamplePoint(bank.station_attrs[pm.source_ids[subset[r]]].location, 0.0) for r in rows
        ]
        w = kriging_weights(points, target, model)
        pred[cols] = w @ vals[np.ix_(rows, cols)]
        valid[cols] = True
    return pred, valid


def _frozen_variogram(
    pm_list: list[PredictionMatrix], bank: SubmodelBank, kind: str, n_bins: int
) -> VariogramModel | None:
    """Fit one variogram on the first fully available prediction snapshot."""
    from .geostats import SamplePoint, empirical_semivariogram, fit_variogram, _fallback_model

    for pm in pm_list:
        avail = ~np.isnan(pm.values)
        full = np.nonzero(avail.all(axis=0))[0]
        if full.size == 0:
            continue
        col = full[0]
        points = [
            SamplePoint(bank.station_attrs[sid].location, float(pm.values[i, col]))
            for i, sid in enumerate(pm.source_ids)
        ]
        try:
            return fit_variogram(empirical_semivariogram(points, n_bins), kind=kind)
        except DataError:
            return _fallback_model(points, kind)
    return None


def run_station_ablation(
    data: Sequence[StationSeries],
    folds: FoldAssignment,
    fold: int,
    bank: SubmodelBank,
    counts: Sequence[int],
    methods: Sequence[str] = ("average", "weighted_average", "weighted_vote"),
    seed: int = 0,
    trigger: float = DEFAULT_TRIGGER,
    baselines: Mapping[StationId, BaselineModel] | None = None,
    horizon: int | None = None,
    idw_power: float = 2.0,
    ok_refit: bool = False,
    ok_variogram: VariogramModel | None = None,
    variogram_kind: str = "spherical",
    n_bins: int = 15,
    matrices: list[PredictionMatrix] | None = None,
) -> list[AblationResult]:
    """Score each method at each source-station count on one fold.

    At a given count the same seeded subset of stations feeds every method,
    so comparisons are paired. The count equal to the full bank reproduces
    the plain fold experiment.
    """
    for m in methods:
        if m not in METHODS:
            raise DomainError(f"unknown method: {m!r}")
    n_src = len(bank)
    counts = sorted(set(int(c) for c in counts))
    if not counts:
        raise DomainError("no station counts given")
    if counts[0] < 1 or counts[-1] > n_src:
        raise DomainError(f"counts must lie in [1, {n_src}]: {counts}")
    target_ids = sorted(folds.test_stations(fold))
    if matrices is None:
        matrices = build_prediction_matrices(data, bank, target_ids, horizon)
    by_id = index_series(data)

    # Per-target unnormalized attribute weights; frozen bounds make the
    # subset restriction equivalent to recomputing from scratch.
    weight_vec: dict[StationId, np.ndarray] = {}
    for pm in matrices:
        w = bank.weights_for_target(by_id[pm.target_id].attributes)
        weight_vec[pm.target_id] = np.array([w[sid] for sid in pm.source_ids])

    frozen_model = ok_variogram
    if "ok" in methods and not ok_refit and frozen_model is None:
        frozen_model = _frozen_variogram(matrices, bank, variogram_kind, n_bins)

    results: list[AblationResult] = []
    for k in counts:
        rng = np.random.default_rng(np.random.SeedSequence((seed, k)))
        subset = np.sort(rng.choice(n_src, size=k, replace=False))
        for method in methods:
            if method == "baseline":
                continue
            pooled_pred: list[np.ndarray] = []
            pooled_labels: list[np.ndarray] = []
            for pm in matrices:
                attrs = by_id[pm.target_id].attributes
                vals = pm.values[subset]
                avail = ~np.isnan(vals)
                if method == "average":
                    pred, valid = _masked_weighted_mean(vals, avail, np.ones(k))
                elif method == "weighted_average":
                    pred, valid = _masked_weighted_mean(vals, avail, weight_vec[pm.target_id][subset])
                elif method == "weighted_vote":
                    votes = np.where(np.nan_to_num(vals, nan=np.inf) < trigger, 1.0, -1.0)
                    w = weight_vec[pm.target_id][subset][:, None] * avail
                    total = w.sum(axis=0)
                    valid = total > 0
                    score = (w * votes).sum(axis=0) / np.where(valid, total, 1.0)
                    pred = score >= 0.0
                elif method == "idw":
                    u = _idw_weights(pm, subset, bank, attrs, idw_power)
                    pred, valid = _masked_weighted_mean(vals, avail, u)
                elif method == "ok":
                    if ok_refit or frozen_model is None:
                        pred, valid = _ok_refit_series(
                            pm, subset, bank, attrs, variogram_kind, n_bins
                        )
                    else:
                        pred, valid = _ok_series(pm, subset, bank, attrs, frozen_model)
                else:  # pragma: no cover - guarded above
                    raise DomainError(method)
                pooled_pred.append(np.asarray(pred)[valid])
                pooled_labels.append(pm.labels[valid])
            pred_all = np.concatenate(pooled_pred)
            labels_all = np.concatenate(pooled_labels)
            if pred_all.size == 0:
                raise DataError(f"method {method} produced no valid predictions")
            conf = event_confusion(pred_all, labels_all, trigger)
            results.append(
                AblationResult(
                    method=method,
                    station_count=k,
                    fold=fold,
                    seed=seed,
                    rmse=None if pred_all.dtype == np.bool_ else rmse(pred_all, labels_all),
                    tpr=conf.tpr,
                    fdr=conf.fdr,
                    n_predictions=int(pred_all.size),
                    n_events=conf.tp + conf.fn,
                )
            )
    if "baseline" in methods:
        if not baselines:
            raise DataError("baseline method requested but no baseline models supplied")
        pred, labels = evaluate_baselines(baselines, data, bank.horizon, trigger)
        conf = event_confusion(pred, labels, trigger)
        results.append(
            AblationResult(
                method="baseline",
                station_count=0,
                fold=fold,
                seed=seed,
                rmse=rmse(pred, labels),
                tpr=conf.tpr,
                fdr=conf.fdr,
                n_predictions=int(pred.size),
                n_events=conf.tp + conf.fn,
            )
        )
    return results


def _ok_refit_series(
    pm: PredictionMatrix,
    subset: np.ndarray,
    bank: SubmodelBank,
    target_attrs,
    kind: str,
    n_bins: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-timestep kriging with a fresh variogram fit each minute (slow)."""
    locations = {sid: bank.station_attrs[sid].location for sid in pm.source_ids}
    vals = pm.values[subset]
    avail = ~np.isnan(vals)
    n_t = vals.shape[1]
    pred = np.full(n_t, np.nan)
    valid = np.zeros(n_t, dtype=bool)
    ids = [pm.source_ids[i] for i in subset]
    for col in range(n_t):
        rows = np.nonzero(avail[:, col])[0]
        if rows.size < 2:
            continue
        snapshot = {ids[r]: float(vals[r, col]) for r in rows}
        pred[col] = aggregate_by_interpolation(
            snapshot, locations, target_attrs.location, "ok",
            variogram_kind=kind, n_bins=n_bins,
        )
        valid[col] = True
    return pred, valid


@dataclass
class EvaluationReport:
    """Everything one experiment produced, ready for JSON serialization."""

    fold: int
    seed: int
    horizon: int
    trigger: float
    methods: list[str]
    counts: list[int]
    results: list[AblationResult] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "fold": self.fold,
            "seed": self.seed,
            "horizon": self.horizon,
            "trigger": self.trigger,
            "methods": list(self.methods),
            "counts": list(self.counts),
            "results": [r.to_dict() for r in self.results],
        }


def run_fold_experiment(
    data: Sequence[StationSeries],
    folds: FoldAssignment,
    fold: int,
    bank: SubmodelBank,
    methods: Sequence[str] = ("average", "weighted_average", "weighted_vote"),
    counts: Sequence[int] | None = None,
    seed: int = 0,
    trigger: float = DEFAULT_TRIGGER,
    baselines: Mapping[StationId, BaselineModel] | None = None,
    **ablation_kwargs,
) -> EvaluationReport:
    """Evaluate aggregation methods at one fold's held-out stations.

    Without ``counts`` every method uses the full bank; with counts the
    station-count sweep runs instead (the full-bank case is the count equal
    to the bank size).
    """
    counts = [len(bank)] if counts is None else list(counts)
    results = run_station_ablation(
        data, folds, fold, bank, counts, methods=methods, seed=seed,
        trigger=trigger, baselines=baselines, **ablation_kwargs,
    )
    return EvaluationReport(
        fold=fold,
        seed=seed,
        horizon=bank.horizon,
        trigger=trigger,
        methods=list(methods),
        counts=sorted(set(int(c) for c in counts)),
        results=results,
    )
