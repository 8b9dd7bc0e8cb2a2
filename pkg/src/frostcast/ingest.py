"""File ingestion: station CSVs, ESRI ASCII grids, boundary polygons.

Grids are stored south-up internally (row 0 is the southernmost row) with
cell-center origins, regardless of the north-first order ESRI ASCII files
use on disk. NODATA cells carry NaN values and a False mask bit.
"""

from __future__ import annotations

import csv
import io
import json
import os
import zipfile
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .core import (
    ClimateObservation,
    GeoPoint,
    StationAttributes,
    StationId,
    StationSeries,
    index_series,
    observation_violations,
)
from .errors import DataError, DomainError, FormatError, OutOfExtentError, UnsupportedVersionError

CSV_HEADER = ("timestamp", "temperature", "dew_point", "rh", "wind_speed", "wind_dir")
NODATA_DEFAULT = -9999.0
BUNDLE_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class AttributeGrid:
    """Regular lon/lat grid of one attribute.

    ``origin`` is the center of the south-west cell; ``values`` and ``mask``
    have shape (nrows, ncols) with row 0 southernmost. Masked-out cells
    (mask False) are NODATA.
    """

    origin: GeoPoint
    cell_size: float
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        mask = np.asarray(self.mask, dtype=bool)
        if self.cell_size <= 0:
            raise DomainError(f"cell_size must be > 0: {self.cell_size!r}")
        if values.ndim != 2 or values.shape != mask.shape or values.size == 0:
            raise DataError(f"values/mask must be matching non-empty 2-D arrays, got {values.shape}")
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @property
    def nrows(self) -> int:
        return self.values.shape[0]

    @property
    def ncols(self) -> int:
        return self.values.shape[1]

    def cell_center(self, row: int, col: int) -> GeoPoint:
        return GeoPoint(self.origin.lon + col * self.cell_size,
                        self.origin.lat + row * self.cell_size)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid arrays (lon, lat) of every cell center, shape (nrows, ncols)."""
        lon = self.origin.lon + np.arange(self.ncols) * self.cell_size
        lat = self.origin.lat + np.arange(self.nrows) * self.cell_size
        return np.meshgrid(lon, lat)

    def index_of(self, point: GeoPoint) -> tuple[int, int]:
        """(row, col) of the cell containing ``point``; raises outside the extent."""
        half = self.cell_size / 2.0
        col = int(np.floor((point.lon - (self.origin.lon - half)) / self.cell_size))
        row = int(np.floor((point.lat - (self.origin.lat - half)) / self.cell_size))
        if not (0 <= row < self.nrows and 0 <= col < self.ncols):
            raise OutOfExtentError(
                f"point ({point.lon}, {point.lat}) outside grid extent"
            )
        return row, col

    def same_geometry(self, other: "AttributeGrid") -> bool:
        return (
            self.values.shape == other.values.shape
            and abs(self.origin.lon - other.origin.lon) < 1e-9
            and abs(self.origin.lat - other.origin.lat) < 1e-9
            and abs(self.cell_size - other.cell_size) < 1e-12
        )


def parse_ascii_grid(text: str) -> AttributeGrid:
    """Parse an ESRI ASCII grid; header keywords are case-insensitive.

    The corner-registered header origin is shifted by half a cell to the
    cell-center convention, and rows are flipped south-up.
    """
    tokens_by_line = [line.split() for line in text.splitlines() if line.strip()]
    header: dict[str, float] = {}
    body_start = 0
    for i, tokens in enumerate(tokens_by_line):
        if len(tokens) == 2 and tokens[0].lower() in (
            "ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value",
        ):
            try:
                header[tokens[0].lower()] = float(tokens[1])
            except ValueError as exc:
                raise FormatError(f"bad header value: {' '.join(tokens)}") from exc
            body_start = i + 1
        else:
            break
    required = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize")
    missing = [k for k in required if k not in header]
    if missing:
        raise FormatError(f"grid header missing keywords: {missing}")
    ncols, nrows = int(header["ncols"]), int(header["nrows"])
    if ncols < 1 or nrows < 1:
        raise FormatError(f"grid dimensions must be positive: {ncols} x {nrows}")
    cell = header["cellsize"]
    if cell <= 0:
        raise FormatError(f"cellsize must be > 0: {cell}")
    nodata = header.get("nodata_value")

    flat: list[float] = []
    for tokens in tokens_by_line[body_start:]:
        for tok in tokens:
            try:
                flat.append(float(tok))
            except ValueError as exc:
                raise FormatError(f"bad grid value: {tok!r}") from exc
    if len(flat) != nrows * ncols:
        raise FormatError(f"expected {nrows * ncols} grid values, got {len(flat)}")
    north_up = np.array(flat, dtype=np.float64).reshape(nrows, ncols)
    values = north_up[::-1].copy()
    if nodata is None:
        mask = np.isfinite(values)
    else:
        mask = np.isfinite(values) & (values != nodata)
    values = np.where(mask, values, np.nan)
    origin = GeoPoint(header["xllcorner"] + cell / 2.0, header["yllcorner"] + cell / 2.0)
    return AttributeGrid(origin, cell, values, mask)


def write_ascii_grid(grid: AttributeGrid, nodata: float = NODATA_DEFAULT) -> str:
    """Serialize a grid back to ESRI ASCII; inverse of parse for finite cells."""
    half = grid.cell_size / 2.0
    lines = [
        f"ncols {grid.ncols}",
        f"nrows {grid.nrows}",
        f"xllcorner {grid.origin.lon - half!r}",
        f"yllcorner {grid.origin.lat - half!r}",
        f"cellsize {grid.cell_size!r}",
        f"NODATA_value {nodata!r}",
    ]
    north_up_values = grid.values[::-1]
    north_up_mask = grid.mask[::-1]
    for row, mrow in zip(north_up_values, north_up_mask):
        lines.append(" ".join(repr(float(v)) if ok else repr(nodata) for v, ok in zip(row, mrow)))
    return "\n".join(lines) + "\n"


def resample_grid(grid: AttributeGrid, target_cell: float) -> AttributeGrid:
    """Block-mean downsample to a coarser cell size.

    Each target cell averages the unmasked source cell centers falling in
    it; an empty target cell copies the nearest unmasked source value but
    stays masked out. Upsampling is not supported.
    """
    if target_cell < grid.cell_size:
        raise DomainError(
            f"cannot upsample from {grid.cell_size} to {target_cell}"
        )
    if target_cell == grid.cell_size:
        return grid
    half = grid.cell_size / 2.0
    ll_lon = grid.origin.lon - half
    ll_lat = grid.origin.lat - half
    extent_x = grid.ncols * grid.cell_size
    extent_y = grid.nrows * grid.cell_size
    ncols = max(1, int(np.ceil(extent_x / target_cell - 1e-9)))
    nrows = max(1, int(np.ceil(extent_y / target_cell - 1e-9)))

    lon_grid, lat_grid = grid.cell_centers()
    col_idx = np.minimum(((lon_grid - ll_lon) / target_cell).astype(np.int64), ncols - 1)
    row_idx = np.minimum(((lat_grid - ll_lat) / target_cell).astype(np.int64), nrows - 1)
    flat_idx = row_idx * ncols + col_idx

    m = grid.mask
    sums = np.bincount(flat_idx[m], weights=grid.values[m], minlength=nrows * ncols)
    counts = np.bincount(flat_idx[m], minlength=nrows * ncols)
    values = np.full(nrows * ncols, np.nan)
    mask = counts > 0
    values[mask] = sums[mask] / counts[mask]

    if (~mask).any() and m.any():
        src_pts = np.column_stack([lon_grid[m], lat_grid[m]])
        tree = cKDTree(src_pts)
        t_lon = ll_lon + target_cell / 2.0 + (np.nonzero(~mask)[0] % ncols) * target_cell
        t_lat = ll_lat + target_cell / 2.0 + (np.nonzero(~mask)[0] // ncols) * target_cell
        _, nearest = tree.query(np.column_stack([t_lon, t_lat]))
        values[~mask] = grid.values[m][nearest]
    origin = GeoPoint(ll_lon + target_cell / 2.0, ll_lat + target_cell / 2.0)
    return AttributeGrid(origin, target_cell, values.reshape(nrows, ncols), mask.reshape(nrows, ncols))


@dataclass(frozen=True)
class BoundaryPolygon:
    """One or more rings of (lon, lat) vertices; holes via even-odd parity."""

    rings: tuple[tuple[GeoPoint, ...], ...]

    def __post_init__(self) -> None:
        if not self.rings:
            raise DataError("polygon needs at least one ring")
        for ring in self.rings:
            if len(ring) < 3:
                raise DataError(f"ring needs >= 3 vertices, got {len(ring)}")


def parse_boundary_json(text: str) -> BoundaryPolygon:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"boundary is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "rings" not in doc:
        raise FormatError('boundary JSON must contain a "rings" key')
    try:
        rings = tuple(
            tuple(GeoPoint(float(lon), float(lat)) for lon, lat in ring) for ring in doc["rings"]
        )
        return BoundaryPolygon(rings)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"malformed boundary rings: {exc}") from exc


def boundary_to_json(poly: BoundaryPolygon) -> str:
    return json.dumps(
        {"rings": [[[p.lon, p.lat] for p in ring] for ring in poly.rings]}, sort_keys=True
    )


def _crossings_inside(lon: np.ndarray, lat: np.ndarray, ring: Sequence[GeoPoint]) -> np.ndarray:
    """Even-odd ray-casting test, vectorized over query points."""
    inside = np.zeros(lon.shape, dtype=bool)
    n = len(ring)
    for k in range(n):
        p1, p2 = ring[k], ring[(k + 1) % n]
        y1, y2 = p1.lat, p2.lat
        if y1 == y2:
            continue
        straddles = (lat >= min(y1, y2)) & (lat < max(y1, y2))
        if not straddles.any():
            continue
        x_cross = p1.lon + (lat - y1) * (p2.lon - p1.lon) / (y2 - y1)
        inside ^= straddles & (x_cross > lon)
    return inside


def point_in_polygon(poly: BoundaryPolygon, point: GeoPoint) -> bool:
    """Even-odd containment over every ring, so hole rings punch out."""
    lon = np.array([point.lon])
    lat = np.array([point.lat])
    inside = np.zeros(1, dtype=bool)
    for ring in poly.rings:
        inside ^= _crossings_inside(lon, lat, ring)
    return bool(inside[0])


def apply_boundary_mask(grid: AttributeGrid, poly: BoundaryPolygon) -> AttributeGrid:
    """Mask out every cell whose center lies outside the polygon."""
    lon, lat = grid.cell_centers()
    inside = np.zeros(lon.shape, dtype=bool)
    for ring in poly.rings:
        inside ^= _crossings_inside(lon, lat, ring)
    mask = grid.mask & inside
    values = np.where(mask, grid.values, np.nan)
    return AttributeGrid(grid.origin, grid.cell_size, values, mask)


def lookup_attribute(grid: AttributeGrid, point: GeoPoint) -> float:
    """Value of the cell containing ``point``; nearest unmasked cell if masked.

    Points outside the grid extent raise OutOfExtentError rather than
    silently extrapolating.
    """
    row, col = grid.index_of(point)
    if grid.mask[row, col]:
        return float(grid.values[row, col])
    if not grid.mask.any():
        raise DataError("grid has no unmasked cells to fall back on")
    lon, lat = grid.cell_centers()
    m = grid.mask
    tree = cKDTree(np.column_stack([lon[m], lat[m]]))
    _, nearest = tree.query([point.lon, point.lat])
    return float(grid.values[m][nearest])


# --- station CSV --------------------------------------------------------------


def _parse_timestamp(token: str, iso_mode: bool | None) -> tuple[int | None, bool | None]:
    """Returns (minutes-since-epoch, detected-mode); None value on failure.

    Mode is detected from the first parseable row and then pinned for the
    rest of the file, so mixed formats are rejected as bad rows.
    """
    token = token.strip()
    if iso_mode in (None, False):
        try:
            return int(token), False
        except ValueError:
            if iso_mode is False:
                return None, False
    try:
        stamp = datetime.fromisoformat(token.replace("Z", "+00:00"))
    except ValueError:
        return None, iso_mode
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    seconds = stamp.timestamp()
    minutes = round(seconds / 60.0)
    if minutes * 60 != int(seconds):
        return None, True
    return int(minutes), True


def parse_station_csv(
    text: str, station_id: StationId, attributes: StationAttributes
) -> tuple[StationSeries, int]:
    """Parse one station's observations; returns (series, dropped row count).

    Rows with missing or unparsable fields, invalid sensor values, or
    non-increasing timestamps are dropped and counted, never imputed, so
    the returned series always validates cleanly.
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise FormatError("empty station file") from None
    if tuple(h.strip() for h in header) != CSV_HEADER:
        raise FormatError(
            f"bad station header: expected {','.join(CSV_HEADER)}, got {','.join(header)}"
        )
    observations: list[ClimateObservation] = []
    dropped = 0
    iso_mode: bool | None = None
    last_ts: int | None = None
    for row in reader:
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 6:
            dropped += 1
            continue
        ts, iso_mode = _parse_timestamp(row[0], iso_mode)
        if ts is None:
            dropped += 1
            continue
        try:
            fields = [float(c) for c in row[1:]]
        except ValueError:
            dropped += 1
            continue
        obs = ClimateObservation(ts, *fields)
        if observation_violations(obs):
            dropped += 1
            continue
        if last_ts is not None and ts <= last_ts:
            dropped += 1
            continue
        observations.append(obs)
        last_ts = ts
    return StationSeries(station_id, attributes, tuple(observations)), dropped


# --- dataset bundle -----------------------------------------------------------

_BUNDLE_EPOCH = (1980, 1, 1, 0, 0, 0)


@dataclass(frozen=True)
class Dataset:
    """Validated stations plus the attribute grids they were enriched from."""

    stations: tuple[StationSeries, ...]
    dem: AttributeGrid | None = None
    ndvi: AttributeGrid | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.stations, tuple):
            object.__setattr__(self, "stations", tuple(self.stations))
        index_series(self.stations)  # rejects duplicate ids

    def station_ids(self) -> list[StationId]:
        return sorted(s.id for s in self.stations)

    def get(self, sid: StationId) -> StationSeries:
        for s in self.stations:
            if s.id == sid:
                return s
        raise DataError(f"no station {sid} in dataset")


def _write_npy(zf: zipfile.ZipFile, name: str, arr: np.ndarray) -> None:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr))
    info = zipfile.ZipInfo(name, date_time=_BUNDLE_EPOCH)
    zf.writestr(info, buf.getvalue())


def _grid_meta(grid: AttributeGrid) -> dict:
    return {
        "origin_lon": grid.origin.lon,
        "origin_lat": grid.origin.lat,
        "cell_size": grid.cell_size,
    }


def save_dataset(dataset: Dataset, path: str | os.PathLike) -> None:
    """Write a dataset bundle: a zip of npy arrays plus a JSON manifest.

    Zip entries carry a fixed timestamp so identical datasets produce
    byte-identical files.
    """
    manifest: dict = {
        "version": BUNDLE_SCHEMA_VERSION,
        "stations": [
            {
                "id": s.id,
                "lon": s.attributes.location.lon,
                "lat": s.attributes.location.lat,
                "dem": s.attributes.dem,
                "ndvi": s.attributes.ndvi,
                "n_obs": len(s.observations),
            }
            for s in sorted(dataset.stations, key=lambda s: s.id)
        ],
        "grids": {},
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for name, grid in (("dem", dataset.dem), ("ndvi", dataset.ndvi)):
            if grid is None:
                continue
            manifest["grids"][name] = _grid_meta(grid)
            _write_npy(zf, f"grid_{name}_values.npy", grid.values)
            _write_npy(zf, f"grid_{name}_mask.npy", grid.mask)
        for s in sorted(dataset.stations, key=lambda s: s.id):
            n = len(s.observations)
            ts = np.fromiter((o.timestamp for o in s.observations), dtype=np.int64, count=n)
            raw = np.empty((n, 5), dtype=np.float64)
            for i, o in enumerate(s.observations):
                raw[i] = (o.temperature, o.dew_point, o.rh, o.wind_speed, o.wind_dir_met)
            _write_npy(zf, f"station_{s.id}_ts.npy", ts)
            _write_npy(zf, f"station_{s.id}_obs.npy", raw)
        info = zipfile.ZipInfo("manifest.json", date_time=_BUNDLE_EPOCH)
        zf.writestr(info, json.dumps(manifest, sort_keys=True, indent=2))


def load_dataset(path: str | os.PathLike) -> Dataset:
    try:
        zf = zipfile.ZipFile(path)
    except (zipfile.BadZipFile, OSError) as exc:
        raise FormatError(f"not a dataset bundle: {exc}") from exc
    with zf:
        try:
            manifest = json.loads(zf.read("manifest.json"))
        except (KeyError, json.JSONDecodeError) as exc:
            raise FormatError(f"bundle missing manifest: {exc}") from exc
        if manifest.get("version") != BUNDLE_SCHEMA_VERSION:
            raise UnsupportedVersionError(
                f"unsupported bundle version: {manifest.get('version')!r}"
            )

        def read_npy(name: str) -> np.ndarray:
            try:
                return np.lib.format.read_array(io.BytesIO(zf.read(name)))
            except KeyError as exc:
                raise FormatError(f"bundle missing entry {name}") from exc

        grids: dict[str, AttributeGrid | None] = {"dem": None, "ndvi": None}
        for name, meta in manifest.get("grids", {}).items():
            grids[name] = AttributeGrid(
                GeoPoint(meta["origin_lon"], meta["origin_lat"]),
                meta["cell_size"],
                read_npy(f"grid_{name}_values.npy"),
                read_npy(f"grid_{name}_mask.npy"),
            )
        stations = []
        for row in manifest["stations"]:
            attrs = StationAttributes(GeoPoint(row["lon"], row["lat"]), row["dem"], row["ndvi"])
            ts = read_npy(f"station_{row['id']}_ts.npy")
            raw = read_npy(f"station_{row['id']}_obs.npy")
            obs = tuple(
                ClimateObservation(int(t), *map(float, vals)) for t, vals in zip(ts, raw)
            )
            stations.append(StationSeries(row["id"], attrs, obs))
    return Dataset(tuple(stations), grids["dem"], grids["ndvi"])


def ingest_directory(
    stations_dir: str | os.PathLike,
    dem: AttributeGrid,
    ndvi: AttributeGrid,
    boundary: BoundaryPolygon | None = None,
    cell_size: float | None = None,
) -> tuple[Dataset, dict[StationId, int]]:
    """Full ingestion pipeline from a directory of station files.

    ``stations_dir`` must contain ``stations.json`` (id -> lon/lat) and one
    ``<id>.csv`` per station. Grids are optionally resampled, masked to the
    boundary, and used to look up each station's DEM and NDVI attributes.
    Returns the dataset plus per-station dropped-row counts.
    """
    base = Path(stations_dir)
    locations_path = base / "stations.json"
    if not locations_path.exists():
        raise FormatError(f"missing stations.json in {base}")
    try:
        listing = json.loads(locations_path.read_text())
        entries = [(str(e["id"]), GeoPoint(float(e["lon"]), float(e["lat"])))
                   for e in listing["stations"]]
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise FormatError(f"malformed stations.json: {exc}") from exc
    if cell_size is not None:
        dem = resample_grid(dem, cell_size)
        ndvi = resample_grid(ndvi, cell_size)
    if boundary is not None:
        dem = apply_boundary_mask(dem, boundary)
        ndvi = apply_boundary_mask(ndvi, boundary)
    if not dem.same_geometry(ndvi):
        raise DataError("dem and ndvi grids must share geometry after preparation")
    stations: list[StationSeries] = []
    drops: dict[StationId, int] = {}
    for sid, location in entries:
        csv_path = base / f"{sid}.csv"
        if not csv_path.exists():
            raise FormatError(f"missing station file {csv_path}")
        attrs = StationAttributes(
            location,
            lookup_attribute(dem, location),
            lookup_attribute(ndvi, location),
        )
        series, dropped = parse_station_csv(csv_path.read_text(), sid, attrs)
        stations.append(series)
        drops[sid] = dropped
    return Dataset(tuple(stations), dem, ndvi), drops
