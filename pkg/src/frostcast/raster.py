"""Region-wide prediction rasters and their statistical comparison.

A raster evaluates the submodel bank at every unmasked grid cell for one
climate snapshot, treating each cell as a virtual target site whose static
attributes come from the DEM and NDVI grids. Rasters from different folds
or methods are compared cell-by-cell with the paired t-test.
"""

from __future__ import annotations

import json
import os
from typing import Mapping, Sequence

import numpy as np

from .core import StationId
from .ensemble import SubmodelBank, WEIGHT_EPSILON
from .errors import DataError, DomainError
from .evaluate import paired_t_test
from .features import apply_scaler, invert_label
from .ingest import AttributeGrid
from .neuralnet import forward_batch

RASTER_METHODS = ("average", "weighted_average", "single")


def generate_raster(
    bank: SubmodelBank,
    climate: Mapping[StationId, Sequence[float]],
    dem: AttributeGrid,
    ndvi: AttributeGrid,
    method: str = "weighted_average",
    source_id: StationId | None = None,
) -> AttributeGrid:
    """Predicted next-window minimum over every unmasked cell.

    ``climate`` maps each participating source station to its 5-value
    reading at the chosen timestamp; stations absent from the mapping sit
    out. Cell weights reuse the bank's frozen normalization bounds, with
    normalized distances clamped into [0, 1] for cells beyond them.
    """
    if method not in RASTER_METHODS:
        raise DomainError(f"unknown raster method: {method!r}")
    if not dem.same_geometry(ndvi):
        raise DataError("dem and ndvi grids must share geometry")
    if method == "single":
        if source_id is None:
            raise DomainError("single-source raster needs source_id")
        if source_id not in climate:
            raise DataError(f"no climate snapshot for station {source_id}")
        ids = [source_id]
    else:
        ids = sorted(set(climate) & set(bank.models))
        if not ids:
            raise DataError("no climate snapshots for any bank station")
    unknown = sorted(set(climate) - set(bank.models))
    if unknown:
        raise DataError(f"climate given for stations not in bank: {unknown}")

    mask = dem.mask & ndvi.mask
    if not mask.any():
        raise DataError("no unmasked cells to predict on")
    lon_g, lat_g = dem.cell_centers()
    lon = lon_g[mask]
    lat = lat_g[mask]
    cell_dem = dem.values[mask]
    cell_ndvi = ndvi.values[mask]
    n_cells = lon.size

    preds = np.empty((len(ids), n_cells))
    for i, sid in enumerate(ids):
        snap = np.asarray(climate[sid], dtype=np.float64)
        if snap.shape != (5,):
            raise DataError(f"climate snapshot for {sid} must have 5 values, got {snap.shape}")
        x = np.empty((n_cells, 13))
        x[:, 0:4] = bank.station_attrs[sid].as_tuple()
        x[:, 4] = lon
        x[:, 5] = lat
        x[:, 6] = cell_dem
        x[:, 7] = cell_ndvi
        x[:, 8:13] = snap
        scaler = bank.scalers[sid]
        preds[i] = invert_label(scaler, forward_batch(bank.models[sid], apply_scaler(scaler, x)))

    if method == "single":
        cell_values = preds[0]
    elif method == "average":
        cell_values = preds.mean(axis=0)
    else:
        cell_values = _weighted_cells(bank, ids, lon, lat, cell_dem, cell_ndvi, preds)

    values = np.full(dem.values.shape, np.nan)
    values[mask] = cell_values
    return AttributeGrid(dem.origin, dem.cell_size, values, mask)


def _weighted_cells(
    bank: SubmodelBank,
    ids: Sequence[StationId],
    lon: np.ndarray,
    lat: np.ndarray,
    cell_dem: np.ndarray,
    cell_ndvi: np.ndarray,
    preds: np.ndarray,
) -> np.ndarray:
    """Attribute-distance weighted mean per cell, vectorized over cells."""
    c = bank.coefficients
    weights = np.empty_like(preds)
    for i, sid in enumerate(ids):
        a = bank.station_attrs[sid]
        geo = np.hypot(a.location.lon - lon, a.location.lat - lat)
        dem_d = np.abs(a.dem - cell_dem)
        ndvi_d = np.abs(a.ndvi - cell_ndvi)
        raw = np.column_stack([geo, dem_d, ndvi_d])
        norm = bank.normalization.normalize(raw)
        denom = c.geo * norm[:, 0] + c.dem * norm[:, 1] + c.ndvi * norm[:, 2]
        weights[i] = 1.0 / np.maximum(denom, WEIGHT_EPSILON)
    weights /= weights.sum(axis=0)
    return (weights * preds).sum(axis=0)


def compare_rasters(a: AttributeGrid, b: AttributeGrid) -> tuple[float, float]:
    """Paired t-test over cells unmasked in both rasters, row-major order."""
    if not a.same_geometry(b):
        raise DataError("rasters must share geometry to compare")
    joint = a.mask & b.mask
    n = int(joint.sum())
    if n < 2:
        raise DataError(f"need >= 2 jointly unmasked cells, got {n}")
    return paired_t_test(a.values[joint], b.values[joint])


def raster_matrix(rasters: Mapping[str, AttributeGrid]) -> tuple[list[str], np.ndarray]:
    """Pairwise p-value matrix with NaN on the diagonal.

    Returns labels in sorted order and the symmetric matrix of two-sided
    p-values between each pair of rasters.
    """
    labels = sorted(rasters)
    if len(labels) < 2:
        raise DataError("matrix needs at least two rasters")
    n = len(labels)
    out = np.full((n, n), np.nan)
    for i in range(n):
        for j in range(i + 1, n):
            _, p = compare_rasters(rasters[labels[i]], rasters[labels[j]])
            out[i, j] = out[j, i] = p
    return labels, out


def matrix_to_csv(labels: Sequence[str], matrix: np.ndarray) -> str:
    """Symmetric p-value table with an N/A diagonal, mirroring print layouts."""
    lines = ["," + ",".join(labels)]
    for i, label in enumerate(labels):
        cells = []
        for j in range(len(labels)):
            cells.append("N/A" if i == j else repr(float(matrix[i, j])))
        lines.append(label + "," + ",".join(cells))
    return "\n".join(lines) + "\n"


def write_png(grid: AttributeGrid, path: str | os.PathLike, sidecar: str | os.PathLike | None = None) -> None:
    """Optional heatmap output; requires matplotlib."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:  # pragma: no cover - depends on extras
        raise DataError("png output requires matplotlib (install the png extra)") from exc
    data = np.where(grid.mask, grid.values, np.nan)
    lo = float(np.nanmin(data))
    hi = float(np.nanmax(data))
    fig, ax = plt.subplots(figsize=(6, 6 * grid.nrows / max(grid.ncols, 1)))
    ax.imshow(data, origin="lower", cmap="viridis", vmin=lo, vmax=hi)
    ax.set_axis_off()
    fig.savefig(path, bbox_inches="tight", pad_inches=0)
    plt.close(fig)
    if sidecar is not None:
        with open(sidecar, "w", encoding="utf-8") as fh:
            json.dump({"min": lo, "max": hi, "cmap": "viridis"}, fh, sort_keys=True)
