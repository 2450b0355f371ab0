"""Synthetic desk-scale dataset generator.

Produces a small but complete world: a 3x3 grid of daily weather for six
variables, a per-year orchard mask over four counties, county yields driven
by a known quadratic in two phenology features plus county trend and noise,
and a mini scenario tree (members x RCPs) whose pre-2006 data is shared
byte-for-byte between the two RCP directories of each member. The generating
parameters land in truth.json so tests can check recovery.
"""

from __future__ import annotations

import json
from datetime import date
from pathlib import Path

import numpy as np
import yaml

from .dataset import TREND_ORIGIN_YEAR, YieldRecord, save_yields
from .grids import CropMask, GridManifest, GridSeries, MaskEntry, save_crop_mask, save_grid
from .phenology import default_window_specs, featurize_grid_years, save_window_specs
from .rng import derive_rng

__all__ = ["SynthLayout", "generate"]

SYNTH_COUNTIES = ("Fresno", "Kern", "Merced", "Stanislaus")
_COUNTY_CELLS = {"Fresno": [0, 1, 2], "Kern": [3, 4], "Merced": [5, 6], "Stanislaus": [7, 8]}
_GRID_SHAPE = (3, 3)
_ORIGIN = (36.0, -120.5)

_UNITS = {"tmin": "degC", "tmax": "degC", "precip": "mm/day", "sph": "kg/kg", "wind": "m/s", "etr": "mm/day"}
# decimals kept in memory and in the files, so both sides see identical values
_DECIMALS = {"tmin": 3, "tmax": 3, "precip": 3, "sph": 6, "wind": 3, "etr": 3}

_TRUTH_FEATURES = ("bloom_precip", "growing_gdd")
_CENTERS = {"bloom_precip": (90.0, 28.0), "growing_gdd": (830.0, 80.0)}
_COEFFS = {
    "intercept": 2.0,
    "bloom_precip": 0.22,
    "bloom_precip_sq": -0.12,
    "growing_gdd": 0.28,
    "growing_gdd_sq": -0.10,
}
_OFFSETS = {"Fresno": 0.15, "Kern": -0.10, "Merced": 0.05, "Stanislaus": -0.05}
_SLOPES = {"Fresno": 0.010, "Kern": 0.014, "Merced": 0.008, "Stanislaus": 0.012}
_AREA_BASE = {"Fresno": 260_000.0, "Kern": 220_000.0, "Merced": 110_000.0, "Stanislaus": 90_000.0}


class SynthLayout:
    """Paths inside a generated dataset directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.grids_dir = self.root / "grids"
        self.mask_path = self.root / "mask.csv"
        self.yields_path = self.root / "yields.csv"
        self.phenology_path = self.root / "phenology.yaml"
        self.truth_path = self.root / "truth.json"
        self.scenarios_dir = self.root / "scenarios"
        self.roster_path = self.scenarios_dir / "roster.yaml"

    def member_dir(self, member_id: str, rcp: str) -> Path:
        return self.scenarios_dir / member_id / f"rcp{rcp.replace('.', '')}"


def _day_angles(dates: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(day-of-year, calendar year) for a datetime64[D] array."""
    years = dates.astype("datetime64[Y]")
    doy = (dates - years.astype("datetime64[D]")).astype(np.int64) + 1
    return doy.astype(np.float64), years.astype(np.int64) + 1970


def _sin(doy: np.ndarray, phase: float) -> np.ndarray:
    return np.sin(2.0 * np.pi * (doy - phase) / 365.25)


def _cos(doy: np.ndarray) -> np.ndarray:
    return np.cos(2.0 * np.pi * doy / 365.25)


def _base_weather(seed: int, stream: str, dates: np.ndarray, n_cells: int) -> dict[str, np.ndarray]:
    """Daily weather fields (n_days, n_cells); fixed draw order per stream."""
    doy, years = _day_angles(dates)
    year0 = int(years.min())
    n_years = int(years.max()) - year0 + 1
    yi = (years - year0).astype(np.int64)
    n = len(dates)

    cell_off = derive_rng(seed, stream, "cell-offsets").normal(0.0, 0.8, size=n_cells)
    temp_anom = derive_rng(seed, stream, "temp-anomaly").normal(0.0, 0.7, size=n_years)
    precip_fac = np.exp(derive_rng(seed, stream, "precip-factor").normal(0.0, 0.22, size=n_years))

    tmin = (
        5.5
        + 9.0 * _sin(doy, 110.0)[:, None]
        + cell_off[None, :]
        + temp_anom[yi][:, None]
        + derive_rng(seed, stream, "tmin-noise").normal(0.0, 1.8, size=(n, n_cells))
    )
    spread = np.clip(
        9.0
        + 2.5 * _sin(doy, 140.0)[:, None]
        + derive_rng(seed, stream, "spread-noise").normal(0.0, 1.2, size=(n, n_cells)),
        0.5,
        None,
    )
    tmax = tmin + spread

    wet_p = np.clip(0.32 * (1.0 + 0.85 * _cos(doy)), 0.02, 0.95)[:, None]
    wet = derive_rng(seed, stream, "precip-wet").random(size=(n, n_cells)) < wet_p
    amount = (
        derive_rng(seed, stream, "precip-amount").exponential(1.0, size=(n, n_cells))
        * (3.2 * (1.0 + 0.5 * _cos(doy)))[:, None]
        * precip_fac[yi][:, None]
    )
    precip = np.where(wet, amount, 0.0)

    sph = np.clip(
        0.0062
        + 0.0042 * _sin(doy, 205.0)[:, None]
        + 0.00015 * temp_anom[yi][:, None]
        + derive_rng(seed, stream, "sph-noise").normal(0.0, 0.0004, size=(n, n_cells)),
        0.0004,
        0.03,
    )
    wind = np.clip(
        2.8
        + 0.9 * _sin(doy, 45.0)[:, None]
        + derive_rng(seed, stream, "wind-noise").normal(0.0, 0.8, size=(n, n_cells)),
        0.05,
        None,
    )
    etr = np.clip(
        3.8
        + 3.1 * _sin(doy, 172.0)[:, None]
        + 0.25 * temp_anom[yi][:, None]
        + derive_rng(seed, stream, "etr-noise").normal(0.0, 0.45, size=(n, n_cells)),
        0.05,
        None,
    )
    return {"tmin": tmin, "tmax": tmax, "precip": precip, "sph": sph, "wind": wind, "etr": etr}


def _apply_rcp(fields: dict[str, np.ndarray], dates: np.ndarray, rcp: str) -> dict[str, np.ndarray]:
    """Post-2006 forcing trend; dates before the seam are untouched."""
    seam = np.datetime64(date(2006, 1, 1), "D")
    years_past = np.maximum(0.0, (dates - seam).astype(np.int64) / 365.25)[:, None]
    warm_rate = {"4.5": 0.022, "8.5": 0.045}[rcp]
    dry_rate = {"4.5": 0.002, "8.5": 0.004}[rcp]
    warmed = dict(fields)
    warmed["tmin"] = fields["tmin"] + warm_rate * years_past
    warmed["tmax"] = fields["tmax"] + warm_rate * years_past
    warmed["precip"] = np.clip(fields["precip"] * (1.0 - dry_rate * years_past), 0.0, None)
    warmed["sph"] = np.clip(fields["sph"] * (1.0 + 0.01 * warm_rate * years_past), 0.0004, 0.05)
    warmed["etr"] = fields["etr"] * (1.0 + 0.01 * warm_rate * years_past)
    return warmed


def _write_fields(
    layout_dir: Path,
    fields: dict[str, np.ndarray],
    dates: np.ndarray,
    missing_seed: tuple | None = None,
) -> dict[str, GridSeries]:
    layout_dir.mkdir(parents=True, exist_ok=True)
    n_rows, n_cols = _GRID_SHAPE
    out: dict[str, GridSeries] = {}
    for var in sorted(fields):
        values = np.round(fields[var], _DECIMALS[var])
        if missing_seed is not None:
            seed, stream = missing_seed
            gaps = derive_rng(seed, stream, "missing", var).random(size=values.shape) < 0.001
            values = np.where(gaps, np.nan, values)
        manifest = GridManifest(
            variable=var,
            unit=_UNITS[var],
            origin_lat=_ORIGIN[0],
            origin_lon=_ORIGIN[1],
            n_rows=n_rows,
            n_cols=n_cols,
            date_start=dates[0].astype(object),
            date_end=dates[-1].astype(object),
        )
        series = GridSeries(manifest=manifest, values=values)
        save_grid(
            series,
            layout_dir / f"{var}.manifest.yaml",
            layout_dir / f"{var}.data.csv",
            float_format=f"%.{_DECIMALS[var]}f",
        )
        out[var] = series
    return out


def _make_mask(seed: int) -> CropMask:
    base = derive_rng(seed, "mask", "base")
    cell_base = {
        cell: float(500.0 * np.exp(base.normal(0.0, 0.35)))
        for county in SYNTH_COUNTIES
        for cell in _COUNTY_CELLS[county]
    }
    entries = []
    for year in range(2008, 2021):
        jitter = derive_rng(seed, "mask", "year", year)
        for county in SYNTH_COUNTIES:
            for cell in _COUNTY_CELLS[county]:
                area = max(10.0, cell_base[cell] * (1.0 + jitter.normal(0.0, 0.02)))
                entries.append(MaskEntry(year=year, cell_id=cell, county=county, area=area))
    return CropMask(entries=entries)


def _true_yield(county: str, year: int, features: dict[str, float], noise: float) -> float:
    c1, s1 = _CENTERS["bloom_precip"]
    c2, s2 = _CENTERS["growing_gdd"]
    z1 = (features["bloom_precip"] - c1) / s1
    z2 = (features["growing_gdd"] - c2) / s2
    value = (
        _COEFFS["intercept"]
        + _COEFFS["bloom_precip"] * z1
        + _COEFFS["bloom_precip_sq"] * z1 * z1
        + _COEFFS["growing_gdd"] * z2
        + _COEFFS["growing_gdd_sq"] * z2 * z2
        + _OFFSETS[county]
        + _SLOPES[county] * (year - TREND_ORIGIN_YEAR)
        + noise
    )
    return max(0.0, value)


def generate(
    out_dir: str | Path,
    seed: int = 42,
    harvest_years: range = range(1991, 2021),
    scenario_years: range = range(2000, 2027),
    n_members: int = 2,
    noise_sigma: float = 0.07,
) -> SynthLayout:
    """Write the full synthetic dataset tree under `out_dir`."""
    layout = SynthLayout(out_dir)
    layout.root.mkdir(parents=True, exist_ok=True)

    first, last = harvest_years[0], harvest_years[-1]
    dates = np.arange(
        np.datetime64(date(first - 1, 1, 1), "D"),
        np.datetime64(date(last, 12, 31), "D") + np.timedelta64(1, "D"),
    )
    fields = _base_weather(seed, "obs", dates, _GRID_SHAPE[0] * _GRID_SHAPE[1])
    grids = _write_fields(layout.grids_dir, fields, dates, missing_seed=(seed, "obs"))

    mask = _make_mask(seed)
    save_crop_mask(mask, layout.mask_path)

    specs = default_window_specs()
    save_window_specs(specs, layout.phenology_path)

    raw_rows = featurize_grid_years(grids, mask, specs, harvest_years)
    noise_rng = derive_rng(seed, "yield-noise")
    records = []
    for row in raw_rows:  # rows sorted by (county, year): noise order is fixed
        eps = float(noise_rng.normal(0.0, 1.0)) * noise_sigma
        area_jitter = derive_rng(seed, "area", row.county, row.year).normal(0.0, 0.01)
        records.append(
            YieldRecord(
                county=row.county,
                year=row.year,
                yield_ton_per_acre=_true_yield(row.county, row.year, row.features, eps),
                planted_area_acres=float(
                    _AREA_BASE[row.county]
                    * (1.0 + 0.012 * (row.year - harvest_years[0]))
                    * (1.0 + area_jitter)
                ),
            )
        )
    save_yields(records, layout.yields_path)

    # scenario tree: per member one shared base series, per RCP a trend on top,
    # so the pre-2006 block is byte-identical between the two RCP directories
    member_ids = [f"member{m + 1:02d}" for m in range(n_members)]
    sdates = np.arange(
        np.datetime64(date(scenario_years[0] - 1, 1, 1), "D"),
        np.datetime64(date(scenario_years[-1], 12, 31), "D") + np.timedelta64(1, "D"),
    )
    for member_id in member_ids:
        base = _base_weather(seed, f"scenario-{member_id}", sdates, _GRID_SHAPE[0] * _GRID_SHAPE[1])
        for rcp in ("4.5", "8.5"):
            _write_fields(layout.member_dir(member_id, rcp), _apply_rcp(base, sdates, rcp), sdates)

    layout.scenarios_dir.mkdir(exist_ok=True)
    layout.roster_path.write_text(
        yaml.safe_dump({"members": [{"id": m, "path": m} for m in member_ids]}, sort_keys=False)
    )

    truth = {
        "seed": seed,
        "counties": list(SYNTH_COUNTIES),
        "truth_features": list(_TRUTH_FEATURES),
        "feature_centers": {k: list(v) for k, v in _CENTERS.items()},
        "coefficients": _COEFFS,
        "county_offsets": _OFFSETS,
        "county_slopes_per_year": _SLOPES,
        "trend_origin_year": TREND_ORIGIN_YEAR,
        "noise_sigma": noise_sigma,
        "harvest_years": [first, last],
        "scenario_years": [scenario_years[0], scenario_years[-1]],
        "members": member_ids,
    }
    layout.truth_path.write_text(json.dumps(truth, sort_keys=True, indent=2) + "\n")
    return layout
