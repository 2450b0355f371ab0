"""Gridded daily climate data and orchard-mask zonal aggregation.

A grid is a regular lat/lon raster (1/24 degree cells by default) holding one
daily climate variable. The orchard mask assigns cells to counties with an
acreage weight per year; aggregation collapses the grid to one daily series
per county using area-weighted means over the masked cells.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from .errors import ConfigError, SchemaError

__all__ = [
    "COUNTIES",
    "VARIABLES",
    "GridManifest",
    "GridSeries",
    "CropMask",
    "CountyDailySeries",
    "load_grid",
    "load_crop_mask",
    "aggregate_to_county",
]

# The 16 almond-producing counties used as the categorical roster. Feature
# tables always carry one indicator and one trend column per roster entry,
# whether or not a given dataset covers every county.
COUNTIES: tuple[str, ...] = (
    "Butte",
    "Colusa",
    "Fresno",
    "Glenn",
    "Kern",
    "Kings",
    "Madera",
    "Merced",
    "Sacramento",
    "San Joaquin",
    "Solano",
    "Stanislaus",
    "Sutter",
    "Tehama",
    "Tulare",
    "Yolo",
)

# Canonical variable names with physical plausibility bounds (inclusive).
# None means unbounded on that side. Unknown variables pass validation.
VARIABLES: dict[str, tuple[float | None, float | None]] = {
    "tmin": (-90.0, 60.0),  # degC
    "tmax": (-90.0, 60.0),  # degC
    "precip": (0.0, None),  # mm/day
    "sph": (0.0, 0.05),  # kg/kg
    "wind": (0.0, None),  # m/s
    "etr": (0.0, None),  # mm/day
}

DEFAULT_CELL_SIZE = 1.0 / 24.0


@dataclass(frozen=True)
class GridManifest:
    """Sidecar metadata describing one gridded variable file."""

    variable: str
    unit: str
    origin_lat: float
    origin_lon: float
    n_rows: int
    n_cols: int
    date_start: date
    date_end: date
    cell_size: float = DEFAULT_CELL_SIZE

    def __post_init__(self):
        if not self.variable:
            raise SchemaError("manifest: variable name must be non-empty")
        if self.cell_size <= 0:
            raise SchemaError("manifest: cell_size must be > 0")
        if self.n_rows < 1 or self.n_cols < 1:
            raise SchemaError("manifest: n_rows and n_cols must be >= 1")
        if self.date_start > self.date_end:
            raise SchemaError("manifest: date_start must be <= date_end")

    @property
    def n_cells(self) -> int:
        return self.n_rows * self.n_cols

    @property
    def dates(self) -> np.ndarray:
        start = np.datetime64(self.date_start, "D")
        end = np.datetime64(self.date_end, "D")
        return np.arange(start, end + np.timedelta64(1, "D"))

    @property
    def n_dates(self) -> int:
        return (self.date_end - self.date_start).days + 1

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        """Center (lat, lon) of the cell at (row, col); origin is the grid corner."""
        if not (0 <= row < self.n_rows and 0 <= col < self.n_cols):
            raise SchemaError(f"cell ({row}, {col}) outside {self.n_rows}x{self.n_cols} grid")
        return (
            self.origin_lat + (row + 0.5) * self.cell_size,
            self.origin_lon + (col + 0.5) * self.cell_size,
        )

    def cell_center_by_id(self, cell_id: int) -> tuple[float, float]:
        return self.cell_center(cell_id // self.n_cols, cell_id % self.n_cols)


@dataclass
class GridSeries:
    """Daily values of one variable over the grid; NaN marks missing."""

    manifest: GridManifest
    values: np.ndarray  # (n_dates, n_cells) float64

    def __post_init__(self):
        expected = (self.manifest.n_dates, self.manifest.n_cells)
        if self.values.shape != expected:
            raise SchemaError(
                f"grid values shape {self.values.shape} != expected {expected}"
            )


@dataclass(frozen=True)
class MaskEntry:
    year: int
    cell_id: int
    county: str
    area: float


@dataclass
class CropMask:
    """Per-year orchard acreage per grid cell with county assignment."""

    entries: list[MaskEntry]
    _by_year: dict[int, list[MaskEntry]] = field(init=False, repr=False)

    def __post_init__(self):
        seen: set[tuple[int, int]] = set()
        by_year: dict[int, list[MaskEntry]] = {}
        for e in self.entries:
            if e.area < 0:
                raise SchemaError(f"mask entry ({e.year}, cell {e.cell_id}): area < 0")
            if e.county not in COUNTIES:
                raise SchemaError(f"mask entry ({e.year}, cell {e.cell_id}): unknown county {e.county!r}")
            key = (e.year, e.cell_id)
            if key in seen:
                raise SchemaError(f"mask entry ({e.year}, cell {e.cell_id}) appears more than once")
            seen.add(key)
            by_year.setdefault(e.year, []).append(e)
        self._by_year = by_year

    @property
    def years(self) -> list[int]:
        return sorted(self._by_year)

    def resolve_year(self, year: int) -> int:
        """Mask year to use for `year`: the year itself, else the nearest
        earlier year with entries, else the earliest available year."""
        if not self._by_year:
            raise SchemaError("crop mask has no entries")
        if year in self._by_year:
            return year
        earlier = [y for y in self._by_year if y < year]
        if earlier:
            return max(earlier)
        return min(self._by_year)

    def entries_for(self, year: int) -> list[MaskEntry]:
        return sorted(self._by_year[self.resolve_year(year)], key=lambda e: e.cell_id)

    def validate_bounds(self, manifest: GridManifest) -> None:
        for e in self.entries:
            if not (0 <= e.cell_id < manifest.n_cells):
                raise SchemaError(
                    f"mask entry ({e.year}, cell {e.cell_id}) outside grid with {manifest.n_cells} cells"
                )


@dataclass
class CountyDailySeries:
    """One daily value per date for one county and one variable."""

    county: str
    variable: str
    dates: np.ndarray  # datetime64[D], strictly increasing
    values: np.ndarray  # float64, NaN = missing

    def __post_init__(self):
        if len(self.dates) != len(self.values):
            raise SchemaError("county series: one value per date required")
        if len(self.dates) > 1 and not np.all(np.diff(self.dates) > np.timedelta64(0, "D")):
            raise SchemaError("county series: dates must be strictly increasing")


def load_manifest(path: str | Path) -> GridManifest:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise SchemaError(f"malformed manifest {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise SchemaError(f"malformed manifest {path}: expected a mapping")
    required = {"variable", "unit", "origin_lat", "origin_lon", "n_rows", "n_cols", "date_start", "date_end"}
    missing = required - raw.keys()
    if missing:
        raise SchemaError(f"manifest {path}: missing fields {sorted(missing)}")
    try:
        return GridManifest(
            variable=str(raw["variable"]),
            unit=str(raw["unit"]),
            origin_lat=float(raw["origin_lat"]),
            origin_lon=float(raw["origin_lon"]),
            n_rows=int(raw["n_rows"]),
            n_cols=int(raw["n_cols"]),
            date_start=_as_date(raw["date_start"], path),
            date_end=_as_date(raw["date_end"], path),
            cell_size=float(raw.get("cell_size", DEFAULT_CELL_SIZE)),
        )
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"manifest {path}: {exc}") from exc


def save_manifest(manifest: GridManifest, path: str | Path) -> None:
    payload = {
        "variable": manifest.variable,
        "unit": manifest.unit,
        "origin_lat": manifest.origin_lat,
        "origin_lon": manifest.origin_lon,
        "n_rows": manifest.n_rows,
        "n_cols": manifest.n_cols,
        "cell_size": manifest.cell_size,
        "date_start": manifest.date_start.isoformat(),
        "date_end": manifest.date_end.isoformat(),
    }
    Path(path).write_text(yaml.safe_dump(payload, sort_keys=False))


def _as_date(value, path) -> date:
    if isinstance(value, date):
        return value
    try:
        return date.fromisoformat(str(value))
    except ValueError as exc:
        raise SchemaError(f"manifest {path}: bad date {value!r}") from exc


def load_grid(manifest_path: str | Path, data_path: str | Path) -> GridSeries:
    """Read a manifest + long-format data CSV (`date,cell_id,value`).

    The CSV must carry exactly one row per (date, cell); missing measurements
    are empty value fields, preserved as NaN. Values are checked against the
    physical bounds for the manifest's variable.
    """
    manifest = load_manifest(manifest_path)
    df = pd.read_csv(
        data_path,
        dtype={"date": str, "cell_id": np.int64, "value": np.float64},
        float_precision="round_trip",
    )
    if list(df.columns) != ["date", "cell_id", "value"]:
        raise SchemaError(f"{data_path}: expected columns date,cell_id,value, got {list(df.columns)}")
    expected_rows = manifest.n_dates * manifest.n_cells
    if len(df) != expected_rows:
        raise SchemaError(
            f"{data_path}: {len(df)} rows, manifest implies {expected_rows} "
            f"({manifest.n_dates} dates x {manifest.n_cells} cells)"
        )

    dates = pd.to_datetime(df["date"], format="%Y-%m-%d", errors="coerce")
    if dates.isna().any():
        row = int(dates.index[dates.isna()][0])
        raise SchemaError(f"{data_path} row {row + 2}: unparseable date {df['date'].iloc[row]!r}")
    day_idx = (dates.values.astype("datetime64[D]") - np.datetime64(manifest.date_start, "D")).astype(np.int64)
    if (day_idx < 0).any() or (day_idx >= manifest.n_dates).any():
        row = int(np.argmax((day_idx < 0) | (day_idx >= manifest.n_dates)))
        raise SchemaError(f"{data_path} row {row + 2}: date outside manifest range")
    cell = df["cell_id"].to_numpy()
    if (cell < 0).any() or (cell >= manifest.n_cells).any():
        row = int(np.argmax((cell < 0) | (cell >= manifest.n_cells)))
        raise SchemaError(f"{data_path} row {row + 2}: cell_id {cell[row]} outside grid")

    flat = day_idx * manifest.n_cells + cell
    order = np.argsort(flat, kind="stable")
    if len(np.unique(flat)) != expected_rows:
        dup = int(np.argmax(np.diff(flat[order]) == 0))
        row = int(order[dup + 1])
        raise SchemaError(f"{data_path} row {row + 2}: duplicate (date, cell_id) pair")

    vals = df["value"].to_numpy(dtype=np.float64)
    lo, hi = VARIABLES.get(manifest.variable, (None, None))
    finite = np.isfinite(vals)
    bad = np.zeros(len(vals), dtype=bool)
    if lo is not None:
        bad |= finite & (vals < lo)
    if hi is not None:
        bad |= finite & (vals > hi)
    if bad.any():
        row = int(np.argmax(bad))
        raise SchemaError(
            f"{data_path} row {row + 2}: {manifest.variable}={vals[row]} outside "
            f"physical range [{lo}, {hi}]"
        )

    values = np.full(expected_rows, np.nan)
    values[flat] = vals
    return GridSeries(manifest=manifest, values=values.reshape(manifest.n_dates, manifest.n_cells))


def save_grid(
    series: GridSeries,
    manifest_path: str | Path,
    data_path: str | Path,
    float_format: str | None = None,
) -> None:
    """Write the manifest + long-format CSV pair read back by load_grid.

    If `float_format` is given, values should already be rounded to the same
    precision so the file parses back to the in-memory array exactly.
    """
    m = series.manifest
    save_manifest(m, manifest_path)
    dates = np.repeat(m.dates, m.n_cells)
    cells = np.tile(np.arange(m.n_cells), m.n_dates)
    df = pd.DataFrame(
        {
            "date": np.datetime_as_string(dates, unit="D"),
            "cell_id": cells,
            "value": series.values.reshape(-1),
        }
    )
    df.to_csv(data_path, index=False, float_format=float_format)


def load_crop_mask(path: str | Path) -> CropMask:
    """Read the mask CSV `year,cell_id,county,area_acres`."""
    df = pd.read_csv(path, float_precision="round_trip")
    expected = ["year", "cell_id", "county", "area_acres"]
    if list(df.columns) != expected:
        raise SchemaError(f"{path}: expected columns {expected}, got {list(df.columns)}")
    entries = [
        MaskEntry(year=int(r.year), cell_id=int(r.cell_id), county=str(r.county), area=float(r.area_acres))
        for r in df.itertuples(index=False)
    ]
    return CropMask(entries=entries)


def save_crop_mask(mask: CropMask, path: str | Path) -> None:
    df = pd.DataFrame(
        {
            "year": [e.year for e in mask.entries],
            "cell_id": [e.cell_id for e in mask.entries],
            "county": [e.county for e in mask.entries],
            "area_acres": [e.area for e in mask.entries],
        }
    )
    df.to_csv(path, index=False)


def aggregate_to_county(
    grid: GridSeries,
    mask: CropMask,
    year: int,
    mode: str = "area_weighted_mean",
) -> list[CountyDailySeries]:
    """Area-weighted zonal aggregation of one grid to per-county daily series.

    Both modes apply the same spatial arithmetic, sum(v_c * a_c) / sum(a_c):
    sum-like variables carry per-cell daily totals, so keeping the spatial
    collapse a weighted mean keeps units per-acre-consistent across counties;
    accumulation over time happens later, in the phenology window. Cells
    missing on a date are dropped with weights renormalized over the rest;
    dates where every masked cell is missing come out as NaN. Counties whose
    masked area totals zero are omitted.
    """
    if mode not in ("area_weighted_mean", "area_weighted_sum"):
        raise ConfigError(f"unknown aggregation mode {mode!r}")
    mask.validate_bounds(grid.manifest)
    entries = mask.entries_for(year)

    by_county: dict[str, list[MaskEntry]] = {}
    for e in entries:
        by_county.setdefault(e.county, []).append(e)

    out: list[CountyDailySeries] = []
    for county in sorted(by_county):
        cells = by_county[county]
        areas = np.array([e.area for e in cells])
        if areas.sum() <= 0:
            continue
        block = grid.values[:, [e.cell_id for e in cells]]  # (n_dates, n_county_cells)
        present = np.isfinite(block)
        weighted = np.where(present, block, 0.0) @ areas
        denom = present @ areas
        with np.errstate(invalid="ignore"):
            series = np.where(denom > 0, weighted / np.where(denom > 0, denom, 1.0), np.nan)
        out.append(
            CountyDailySeries(
                county=county,
                variable=grid.manifest.variable,
                dates=grid.manifest.dates,
                values=series,
            )
        )
    return out
