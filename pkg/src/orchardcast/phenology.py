"""Phenology-window climate features.

Each feature aggregates one climate variable over a crop-growth-stage window
(dormancy, bloom, growing season, harvest) anchored to a harvest year.
Windows that cross the calendar boundary (dormancy) start in the preceding
year. Chill hours and growing degree days are derived daily from tmin/tmax
and summed over their windows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, NumericalError, SchemaError
from .grids import CountyDailySeries, CropMask, GridSeries, aggregate_to_county

__all__ = [
    "PhenologyWindowSpec",
    "FeatureVectorRaw",
    "chill_hours_daily",
    "gdd_daily",
    "extract_window",
    "featurize_year",
    "featurize_grid_years",
    "default_window_specs",
    "load_window_specs",
    "save_window_specs",
]

AGGREGATORS = ("sum", "mean", "chill_hours", "gdd")

# Fraction of window days that may be missing before extraction refuses.
MISSING_TOLERANCE = 0.05


@dataclass(frozen=True)
class PhenologyWindowSpec:
    """One named feature: a variable, a (month, day) window, an aggregator.

    `chill_hours` and `gdd` aggregate daily values derived from the tmin and
    tmax series; for those, `variable` is the conventional label
    "temperature" and `parameter` is the chill threshold / gdd base in degC.
    """

    name: str
    variable: str
    start: tuple[int, int]  # (month, day)
    end: tuple[int, int]
    aggregator: str
    crosses_year_boundary: bool = False
    parameter: float | None = None

    def __post_init__(self):
        if not self.name:
            raise ConfigError("window spec: name must be non-empty")
        if self.aggregator not in AGGREGATORS:
            raise ConfigError(f"window spec {self.name!r}: unknown aggregator {self.aggregator!r}")
        if self.aggregator in ("chill_hours", "gdd") and self.parameter is None:
            raise ConfigError(
                f"window spec {self.name!r}: {self.aggregator} requires a threshold/base parameter"
            )
        for label, (m, d) in (("start", self.start), ("end", self.end)):
            try:
                date(2001, m, d)  # non-leap probe; Feb 29 is not a valid endpoint
            except ValueError as exc:
                raise ConfigError(f"window spec {self.name!r}: bad {label} (month, day) {(m, d)}") from exc
        if not self.crosses_year_boundary and self.start > self.end:
            raise ConfigError(
                f"window spec {self.name!r}: empty window (start after end without "
                f"crosses_year_boundary)"
            )

    def window_dates(self, harvest_year: int) -> np.ndarray:
        """All dates in the window for the given harvest year."""
        start_year = harvest_year - 1 if self.crosses_year_boundary else harvest_year
        start = np.datetime64(date(start_year, *self.start), "D")
        end = np.datetime64(date(harvest_year, *self.end), "D")
        return np.arange(start, end + np.timedelta64(1, "D"))


@dataclass
class FeatureVectorRaw:
    """The 13 window features for one (county, harvest year), physical units."""

    county: str
    year: int
    features: dict[str, float]


def chill_hours_daily(tmin: float, tmax: float, threshold: float) -> float:
    """Hours below `threshold` in one day, from the daily extremes.

    Assumes temperature crosses its range linearly within the day, so the
    cold fraction is (threshold - tmin) / (tmax - tmin), clamped to [0, 1].
    """
    if tmax < tmin:
        raise NumericalError(f"chill_hours_daily: tmax {tmax} < tmin {tmin}")
    if tmax == tmin:
        return 24.0 if tmin < threshold else 0.0
    frac = (threshold - tmin) / (tmax - tmin)
    return 24.0 * min(1.0, max(0.0, frac))


def gdd_daily(tmin: float, tmax: float, base: float) -> float:
    """Growing degree days for one day: mean temperature above `base`, floored at 0."""
    if tmax < tmin:
        raise NumericalError(f"gdd_daily: tmax {tmax} < tmin {tmin}")
    return max(0.0, (tmin + tmax) / 2.0 - base)


def _chill_hours_vec(tmin: np.ndarray, tmax: np.ndarray, threshold: float) -> np.ndarray:
    if np.any(tmax < tmin):
        i = int(np.argmax(tmax < tmin))
        raise NumericalError(f"chill hours: tmax {tmax[i]} < tmin {tmin[i]}")
    span = tmax - tmin
    flat = span == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.clip((threshold - tmin) / np.where(flat, 1.0, span), 0.0, 1.0)
    return 24.0 * np.where(flat, (tmin < threshold).astype(float), frac)


def _gdd_vec(tmin: np.ndarray, tmax: np.ndarray, base: float) -> np.ndarray:
    if np.any(tmax < tmin):
        i = int(np.argmax(tmax < tmin))
        raise NumericalError(f"gdd: tmax {tmax[i]} < tmin {tmin[i]}")
    return np.maximum(0.0, (tmin + tmax) / 2.0 - base)


def _values_on(series: CountyDailySeries, dates: np.ndarray) -> np.ndarray:
    """Series values aligned to `dates`; dates outside the series become NaN."""
    pos = np.searchsorted(series.dates, dates)
    pos_clipped = np.minimum(pos, len(series.dates) - 1)
    hit = series.dates[pos_clipped] == dates
    out = np.where(hit, series.values[pos_clipped], np.nan)
    return out


def extract_window(
    series_by_variable: dict[str, CountyDailySeries],
    spec: PhenologyWindowSpec,
    harvest_year: int,
) -> float:
    """Aggregate one variable over the spec's window of the harvest year.

    Up to 5% of window days may be missing: means use the available days,
    sums (including chill hours and gdd) rescale by window length over
    available days. More missing than that is an error.
    """
    dates = spec.window_dates(harvest_year)
    n = len(dates)

    if spec.aggregator in ("chill_hours", "gdd"):
        for needed in ("tmin", "tmax"):
            if needed not in series_by_variable:
                raise SchemaError(f"feature {spec.name!r}: requires the {needed!r} series")
        tmin = _values_on(series_by_variable["tmin"], dates)
        tmax = _values_on(series_by_variable["tmax"], dates)
        present = np.isfinite(tmin) & np.isfinite(tmax)
        _check_missing(spec, harvest_year, n, int(present.sum()))
        if spec.aggregator == "chill_hours":
            daily = _chill_hours_vec(tmin[present], tmax[present], spec.parameter)
        else:
            daily = _gdd_vec(tmin[present], tmax[present], spec.parameter)
        return float(daily.sum() * (n / present.sum()))

    if spec.variable not in series_by_variable:
        raise SchemaError(f"feature {spec.name!r}: no series for variable {spec.variable!r}")
    vals = _values_on(series_by_variable[spec.variable], dates)
    present = np.isfinite(vals)
    _check_missing(spec, harvest_year, n, int(present.sum()))
    if spec.aggregator == "mean":
        return float(vals[present].mean())
    return float(vals[present].sum() * (n / present.sum()))


def _check_missing(spec: PhenologyWindowSpec, year: int, n_window: int, n_present: int) -> None:
    missing = n_window - n_present
    if missing > MISSING_TOLERANCE * n_window:
        raise SchemaError(
            f"feature {spec.name!r}, harvest year {year}: {missing}/{n_window} window "
            f"days missing exceeds the {MISSING_TOLERANCE:.0%} tolerance"
        )


def featurize_year(
    series_by_variable: dict[str, CountyDailySeries],
    specs: list[PhenologyWindowSpec],
    county: str,
    year: int,
) -> FeatureVectorRaw:
    """All 13 window features for one county and harvest year."""
    if len(specs) != 13:
        raise ConfigError(f"expected exactly 13 window specs, got {len(specs)}")
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ConfigError("window spec names must be distinct")
    features: dict[str, float] = {}
    for spec in specs:
        try:
            value = extract_window(series_by_variable, spec, year)
        except SchemaError as exc:
            raise SchemaError(f"{county} {year}: {exc}") from exc
        if not math.isfinite(value):
            raise NumericalError(f"{county} {year}: feature {spec.name!r} is not finite")
        features[spec.name] = value
    return FeatureVectorRaw(county=county, year=year, features=features)


def featurize_grid_years(
    grids_by_variable: dict[str, GridSeries],
    mask: CropMask,
    specs: list[PhenologyWindowSpec],
    years: range | list[int],
) -> list[FeatureVectorRaw]:
    """Features for every (masked county, harvest year) straight from grids.

    The orchard mask is per-year, so aggregation reruns whenever the resolved
    mask year changes; years sharing a mask year share one aggregation pass.
    """
    years_by_mask_year: dict[int, list[int]] = {}
    for year in years:
        years_by_mask_year.setdefault(mask.resolve_year(year), []).append(year)

    out: list[FeatureVectorRaw] = []
    for mask_year in sorted(years_by_mask_year):
        series_by_county: dict[str, dict[str, CountyDailySeries]] = {}
        for variable, grid in sorted(grids_by_variable.items()):
            for series in aggregate_to_county(grid, mask, mask_year):
                series_by_county.setdefault(series.county, {})[variable] = series
        for county in sorted(series_by_county):
            for year in years_by_mask_year[mask_year]:
                out.append(featurize_year(series_by_county[county], specs, county, year))
    return sorted(out, key=lambda r: (r.county, r.year))


def default_window_specs() -> list[PhenologyWindowSpec]:
    """The configurable default roster shipped with the package.

    Only bloom humidity, bloom precipitation, and dormancy chill hours are
    fixed by the problem; the remaining windows follow standard almond
    phenology stages (dormancy Nov-Jan, bloom Feb-mid Mar, growing season
    mid Mar-Jun, harvest Aug-Oct). Edit the YAML copy written next to any
    synthetic dataset, or pass your own file, to change the roster.
    """
    with resources.files("orchardcast.data").joinpath("phenology.yaml").open() as fh:
        return _parse_specs(yaml.safe_load(fh))


def load_window_specs(path: str | Path) -> list[PhenologyWindowSpec]:
    raw = yaml.safe_load(Path(path).read_text())
    return _parse_specs(raw)


def save_window_specs(specs: list[PhenologyWindowSpec], path: str | Path) -> None:
    payload = {
        "windows": [
            {
                "name": s.name,
                "variable": s.variable,
                "start": list(s.start),
                "end": list(s.end),
                "aggregator": s.aggregator,
                **({"crosses_year_boundary": True} if s.crosses_year_boundary else {}),
                **({"parameter": s.parameter} if s.parameter is not None else {}),
            }
            for s in specs
        ]
    }
    Path(path).write_text(yaml.safe_dump(payload, sort_keys=False))


def _parse_specs(raw) -> list[PhenologyWindowSpec]:
    if not isinstance(raw, dict) or "windows" not in raw:
        raise ConfigError("phenology config: expected a mapping with a 'windows' list")
    specs = []
    for item in raw["windows"]:
        try:
            specs.append(
                PhenologyWindowSpec(
                    name=str(item["name"]),
                    variable=str(item["variable"]),
                    start=tuple(int(v) for v in item["start"]),
                    end=tuple(int(v) for v in item["end"]),
                    aggregator=str(item["aggregator"]),
                    crosses_year_boundary=bool(item.get("crosses_year_boundary", False)),
                    parameter=(None if item.get("parameter") is None else float(item["parameter"])),
                )
            )
        except KeyError as exc:
            raise ConfigError(f"phenology config: window entry missing field {exc}") from exc
    return specs
