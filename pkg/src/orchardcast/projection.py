"""Climate-scenario yield projection and ensemble summaries.

One climate-model member supplies gridded daily forcings; features are built
by the same aggregation and phenology path used in training, the trained
stack predicts county yields, and member series are combined into per-year
ensemble means with an inter-quantile band. Technology scenarios differ only
in the trend input: with-technology extends year - 1980 indefinitely,
without-technology freezes it at its 2020 value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import WOTECH_TREND_CAP, YieldRecord, feature_row
from .errors import ConfigError, SchemaError
from .grids import CropMask, GridSeries
from .learners import r2_score
from .phenology import PhenologyWindowSpec, featurize_grid_years
from .stacking import StackEnsemble, predict_stack

__all__ = [
    "RCPS",
    "TECH_SCENARIOS",
    "ScenarioSpec",
    "CountyYields",
    "ProjectionSummary",
    "HistoricalComparison",
    "project_member",
    "statewide_series",
    "observed_statewide",
    "summarize_ensemble",
    "compare_historical",
    "frozen_areas",
]

RCPS = ("4.5", "8.5")
TECH_SCENARIOS = ("wtech", "wotech")
# CMIP5 historical forcing ends here; later dates come from the RCP runs.
SCENARIO_SEAM_YEAR = 2006


@dataclass(frozen=True)
class ScenarioSpec:
    member_id: str
    rcp: str
    tech: str
    years: range

    def __post_init__(self):
        if self.rcp not in RCPS:
            raise ConfigError(f"rcp must be one of {RCPS}, got {self.rcp!r}")
        if self.tech not in TECH_SCENARIOS:
            raise ConfigError(f"tech must be one of {TECH_SCENARIOS}, got {self.tech!r}")
        if len(self.years) == 0:
            raise ConfigError("scenario years range is empty")

    @property
    def label(self) -> str:
        return f"rcp{self.rcp.replace('.', '')}_{self.tech}"


@dataclass
class CountyYields:
    """Predicted yields for one member scenario, one row per (county, year)."""

    scenario: ScenarioSpec
    counties: list[str]
    years: np.ndarray
    values: np.ndarray  # ton/acre

    def by_county(self) -> dict[str, dict[int, float]]:
        out: dict[str, dict[int, float]] = {}
        for county, year, value in zip(self.counties, self.years, self.values):
            out.setdefault(county, {})[int(year)] = float(value)
        return out


def project_member(
    ensemble: StackEnsemble,
    grids_by_variable: dict[str, GridSeries],
    spec: ScenarioSpec,
    mask: CropMask,
    window_specs: list[PhenologyWindowSpec],
) -> CountyYields:
    """Predict per-county yields for every year of one member scenario."""
    feature_names = [s.name for s in window_specs]
    if feature_names != ensemble.column_names[: len(feature_names)]:
        raise SchemaError(
            "phenology feature names do not match the ensemble's training schema: "
            f"{feature_names} vs {ensemble.column_names[: len(feature_names)]}"
        )

    try:
        raw_rows = featurize_grid_years(grids_by_variable, mask, window_specs, spec.years)
    except SchemaError as exc:
        raise SchemaError(f"member {spec.member_id}: {exc}") from exc

    trend_cap = WOTECH_TREND_CAP if spec.tech == "wotech" else None
    X = np.stack(
        [
            feature_row(
                r.county,
                r.year,
                np.array([r.features[n] for n in feature_names]),
                trend_cap=trend_cap,
            )
            for r in raw_rows
        ]
    )
    return CountyYields(
        scenario=spec,
        counties=[r.county for r in raw_rows],
        years=np.array([r.year for r in raw_rows], dtype=np.int64),
        values=predict_stack(ensemble, X),
    )


def frozen_areas(yields: list[YieldRecord]) -> dict[str, float]:
    """Planted area per county at its last observed year."""
    latest: dict[str, tuple[int, float]] = {}
    for rec in yields:
        if rec.county not in latest or rec.year > latest[rec.county][0]:
            latest[rec.county] = (rec.year, rec.planted_area_acres)
    return {county: area for county, (_, area) in latest.items()}


def statewide_series(
    county_yields: CountyYields, areas: dict[str, float]
) -> tuple[np.ndarray, np.ndarray]:
    """Planted-area-weighted mean across counties, per year."""
    by_county = county_yields.by_county()
    missing = [c for c in by_county if c not in areas]
    if missing:
        raise SchemaError(f"no planted area for counties {missing}")
    years = np.array(sorted({int(y) for y in county_yields.years}), dtype=np.int64)
    values = np.empty(len(years))
    for i, year in enumerate(years):
        num = 0.0
        den = 0.0
        for county in sorted(by_county):
            if int(year) in by_county[county]:
                num += by_county[county][int(year)] * areas[county]
                den += areas[county]
        if den <= 0:
            raise SchemaError(f"year {year}: total planted area is zero")
        values[i] = num / den
    return years, values


def observed_statewide(yields: list[YieldRecord]) -> tuple[np.ndarray, np.ndarray]:
    """Observed statewide yield per year, weighted by that year's planted areas."""
    by_year: dict[int, list[YieldRecord]] = {}
    for rec in yields:
        by_year.setdefault(rec.year, []).append(rec)
    years = np.array(sorted(by_year), dtype=np.int64)
    values = np.empty(len(years))
    for i, year in enumerate(years):
        recs = sorted(by_year[int(year)], key=lambda r: r.county)
        den = sum(r.planted_area_acres for r in recs)
        if den <= 0:
            raise SchemaError(f"year {year}: total planted area is zero")
        values[i] = sum(r.yield_ton_per_acre * r.planted_area_acres for r in recs) / den
    return years, values


@dataclass
class ProjectionSummary:
    """Per-year ensemble mean and inter-quantile range across members."""

    scenario_label: str
    years: np.ndarray
    member_ids: list[str]
    member_values: np.ndarray  # (n_years, n_members)
    mean: np.ndarray
    q25: np.ndarray
    q75: np.ndarray


def summarize_ensemble(
    members: dict[str, tuple[np.ndarray, np.ndarray]],
    scenario_label: str = "",
) -> ProjectionSummary:
    """Combine per-member (years, statewide values) into mean and q25/q75.

    Quantiles use linear interpolation on the sorted member values. All
    members must cover the same years.
    """
    if not members:
        raise SchemaError("summarize_ensemble: no members supplied")
    member_ids = sorted(members)
    ref_years = members[member_ids[0]][0]
    for mid in member_ids[1:]:
        if not np.array_equal(members[mid][0], ref_years):
            raise SchemaError(
                f"member {mid!r} year range differs from member {member_ids[0]!r}"
            )
    matrix = np.stack([members[mid][1] for mid in member_ids], axis=1)
    q25, q75 = np.quantile(matrix, [0.25, 0.75], axis=1)
    return ProjectionSummary(
        scenario_label=scenario_label,
        years=ref_years.copy(),
        member_ids=member_ids,
        member_values=matrix,
        mean=matrix.mean(axis=1),
        q25=q25,
        q75=q75,
    )


@dataclass
class HistoricalComparison:
    """Skill of the ensemble-mean simulation against observations."""

    r2_by_rcp: dict[str, float]
    overlap_years: np.ndarray


def compare_historical(
    summaries: dict[str, ProjectionSummary],
    observations: list[YieldRecord],
) -> HistoricalComparison:
    """R2 of each RCP's ensemble-mean statewide series vs observed yields."""
    obs_years, obs_values = observed_statewide(observations)
    r2_by_rcp: dict[str, float] = {}
    overlap_out: np.ndarray | None = None
    for rcp, summary in sorted(summaries.items()):
        overlap = np.intersect1d(summary.years, obs_years)
        if len(overlap) < 3:
            raise SchemaError(
                f"rcp {rcp}: only {len(overlap)} overlap years with observations, need >= 3"
            )
        sim = summary.mean[np.searchsorted(summary.years, overlap)]
        obs = obs_values[np.searchsorted(obs_years, overlap)]
        r2_by_rcp[rcp] = r2_score(obs, sim)
        overlap_out = overlap
    return HistoricalComparison(r2_by_rcp=r2_by_rcp, overlap_years=overlap_out)
