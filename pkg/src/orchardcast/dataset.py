"""Model-ready feature table assembly.

Rows are (county, year) pairs; columns are the 13 climate features, their
squares (computed on raw physical values), 16 county indicators, and 16
per-county trend features (year - 1980 in the row's county slot). The table
keeps raw values; z-score normalization of the 26 climate columns is a
separate fitted transform so it can be refit per training split.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ConfigError, SchemaError
from .grids import COUNTIES
from .phenology import FeatureVectorRaw
from .rng import derive_rng

__all__ = [
    "TREND_ORIGIN_YEAR",
    "WOTECH_TREND_CAP",
    "YieldRecord",
    "FeatureTable",
    "Normalizer",
    "KFold",
    "Holdout",
    "SplitPlan",
    "build_table",
    "feature_row",
    "fit_normalizer",
    "make_split",
]

TREND_ORIGIN_YEAR = 1980
# Technology frozen at its 2020 level: trend values cap at 2020 - 1980.
WOTECH_TREND_CAP = 40

N_CLIMATE_FEATURES = 13
N_NORMALIZED = 2 * N_CLIMATE_FEATURES  # features + squares


@dataclass(frozen=True)
class YieldRecord:
    county: str
    year: int
    yield_ton_per_acre: float
    planted_area_acres: float

    def __post_init__(self):
        if self.yield_ton_per_acre < 0:
            raise SchemaError(f"{self.county} {self.year}: yield < 0")
        if self.planted_area_acres < 0:
            raise SchemaError(f"{self.county} {self.year}: planted area < 0")
        if not (1980 <= self.year <= 2100):
            raise SchemaError(f"{self.county} {self.year}: year outside 1980..2100")


@dataclass
class FeatureTable:
    """Raw (pre-normalization) design matrix plus targets where known."""

    column_names: list[str]
    counties: list[str]  # per row
    years: np.ndarray  # per row, int64
    X: np.ndarray  # (n_rows, 58) float64, raw values
    y: np.ndarray  # (n_rows,) float64, NaN where no yield is known

    @property
    def n_rows(self) -> int:
        return len(self.counties)

    @property
    def rows_with_targets(self) -> np.ndarray:
        return np.flatnonzero(np.isfinite(self.y))

    def feature_names(self) -> list[str]:
        return self.column_names[:N_CLIMATE_FEATURES]


def _column_names(feature_names: list[str]) -> list[str]:
    return (
        list(feature_names)
        + [f"{n}_sq" for n in feature_names]
        + [f"county_{c}" for c in COUNTIES]
        + [f"trend_{c}" for c in COUNTIES]
    )


def feature_row(
    county: str,
    year: int,
    values: np.ndarray,
    trend_cap: int | None = None,
) -> np.ndarray:
    """One raw design row: features, squares, county one-hot, trend slot.

    `trend_cap` freezes the trend at `min(year - 1980, cap)`; None leaves it
    uncapped (the with-technology scenario and all historical rows).
    """
    if county not in COUNTIES:
        raise SchemaError(f"unknown county {county!r}; roster has {len(COUNTIES)} names")
    if len(values) != N_CLIMATE_FEATURES:
        raise SchemaError(f"{county} {year}: expected {N_CLIMATE_FEATURES} features, got {len(values)}")
    if not np.all(np.isfinite(values)):
        raise SchemaError(f"{county} {year}: non-finite feature value")
    row = np.zeros(N_NORMALIZED + 2 * len(COUNTIES))
    row[:N_CLIMATE_FEATURES] = values
    row[N_CLIMATE_FEATURES:N_NORMALIZED] = np.square(values)
    c = COUNTIES.index(county)
    row[N_NORMALIZED + c] = 1.0
    trend = year - TREND_ORIGIN_YEAR
    if trend_cap is not None:
        trend = min(trend, trend_cap)
    row[N_NORMALIZED + len(COUNTIES) + c] = float(trend)
    return row


def build_table(
    raw_rows: list[FeatureVectorRaw],
    yields: list[YieldRecord] | None = None,
) -> FeatureTable:
    """Join feature vectors with yields into a sorted, fixed-schema table.

    Feature rows without a matching yield keep NaN targets (prediction rows).
    """
    if not raw_rows:
        raise SchemaError("no feature rows supplied")
    feature_names = list(raw_rows[0].features)
    if len(feature_names) != N_CLIMATE_FEATURES:
        raise SchemaError(f"expected {N_CLIMATE_FEATURES} features per row, got {len(feature_names)}")

    seen: set[tuple[str, int]] = set()
    for r in raw_rows:
        key = (r.county, r.year)
        if key in seen:
            raise SchemaError(f"duplicate feature row for {key}")
        seen.add(key)
        if list(r.features) != feature_names:
            raise SchemaError(f"feature row {key}: feature names differ from the first row")

    target: dict[tuple[str, int], float] = {}
    for rec in yields or []:
        target[(rec.county, rec.year)] = rec.yield_ton_per_acre

    ordered = sorted(raw_rows, key=lambda r: (r.county, r.year))
    X = np.stack(
        [
            feature_row(r.county, r.year, np.array([r.features[n] for n in feature_names]))
            for r in ordered
        ]
    )
    y = np.array([target.get((r.county, r.year), np.nan) for r in ordered])
    return FeatureTable(
        column_names=_column_names(feature_names),
        counties=[r.county for r in ordered],
        years=np.array([r.year for r in ordered], dtype=np.int64),
        X=X,
        y=y,
    )


@dataclass
class Normalizer:
    """Z-score transform over the 26 climate columns, identity elsewhere.

    Fitted on training rows only (population standard deviation). Columns
    constant over the training rows keep std 1 so the transform stays total;
    a warning flags them.
    """

    column_names: list[str]
    mean: np.ndarray
    std: np.ndarray
    n_training_rows: int
    training_only: bool = True

    def transform(self, X: np.ndarray) -> np.ndarray:
        self._check_arity(X)
        return (X - self.mean) / self.std

    def inverse(self, Xn: np.ndarray) -> np.ndarray:
        self._check_arity(Xn)
        return Xn * self.std + self.mean

    def _check_arity(self, X: np.ndarray) -> None:
        if X.shape[-1] != len(self.column_names):
            raise SchemaError(
                f"normalizer fitted on {len(self.column_names)} columns, got {X.shape[-1]}"
            )


def fit_normalizer(table: FeatureTable, training_rows: np.ndarray) -> Normalizer:
    training_rows = np.asarray(training_rows)
    if len(training_rows) == 0:
        raise SchemaError("fit_normalizer: training rows must be non-empty")
    n_cols = len(table.column_names)
    mean = np.zeros(n_cols)
    std = np.ones(n_cols)
    block = table.X[training_rows, :N_NORMALIZED]
    mean[:N_NORMALIZED] = block.mean(axis=0)
    col_std = block.std(axis=0)  # population std
    degenerate = col_std <= 0
    if degenerate.any():
        names = [table.column_names[i] for i in np.flatnonzero(degenerate)]
        warnings.warn(f"constant training column(s) {names}: normalized output is all zeros")
    std[:N_NORMALIZED] = np.where(degenerate, 1.0, col_std)
    return Normalizer(
        column_names=list(table.column_names),
        mean=mean,
        std=std,
        n_training_rows=len(training_rows),
    )


@dataclass(frozen=True)
class KFold:
    k: int
    repeats: int = 1


@dataclass(frozen=True)
class Holdout:
    test_fraction: float


@dataclass
class SplitPlan:
    """Row assignments for either k-fold partitions or a single holdout."""

    kind: str  # "kfold" | "holdout"
    seed: int
    n_rows: int
    k: int | None = None
    repeats: int | None = None
    test_fraction: float | None = None
    # kfold: (repeats, n_rows) fold index per row; holdout: (n_rows,) bool test mask
    assignments: np.ndarray = field(default_factory=lambda: np.empty(0))

    def folds(self, repeat: int = 0):
        """Yield (train_rows, test_rows) per fold of one repeat."""
        if self.kind != "kfold":
            raise ConfigError("folds() requires a kfold plan")
        marks = self.assignments[repeat]
        for f in range(self.k):
            yield np.flatnonzero(marks != f), np.flatnonzero(marks == f)

    def holdout_rows(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind != "holdout":
            raise ConfigError("holdout_rows() requires a holdout plan")
        test = self.assignments.astype(bool)
        return np.flatnonzero(~test), np.flatnonzero(test)


def make_split(table: FeatureTable | int, kind: KFold | Holdout, seed: int) -> SplitPlan:
    """Deterministic split plan over the table's rows (or a row count)."""
    n = table if isinstance(table, int) else table.n_rows
    if isinstance(kind, KFold):
        if kind.k < 2:
            raise ConfigError(f"k-fold needs k >= 2, got {kind.k}")
        if kind.k > n:
            raise ConfigError(f"k={kind.k} exceeds {n} rows")
        if kind.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        assignments = np.empty((kind.repeats, n), dtype=np.int64)
        for rep in range(kind.repeats):
            order = derive_rng(seed, "kfold", rep).permutation(n)
            marks = np.empty(n, dtype=np.int64)
            # fold sizes differ by at most one; larger folds come first
            sizes = np.full(kind.k, n // kind.k)
            sizes[: n % kind.k] += 1
            start = 0
            for f, size in enumerate(sizes):
                marks[order[start : start + size]] = f
                start += size
            assignments[rep] = marks
        return SplitPlan(
            kind="kfold", seed=seed, n_rows=n, k=kind.k, repeats=kind.repeats, assignments=assignments
        )
    if isinstance(kind, Holdout):
        if not (0 < kind.test_fraction < 1):
            raise ConfigError(f"test_fraction must be in (0, 1), got {kind.test_fraction}")
        n_test = int(round(kind.test_fraction * n))
        n_test = min(max(n_test, 1), n - 1)
        order = derive_rng(seed, "holdout").permutation(n)
        test = np.zeros(n, dtype=bool)
        test[order[:n_test]] = True
        return SplitPlan(
            kind="holdout", seed=seed, n_rows=n, test_fraction=kind.test_fraction, assignments=test
        )
    raise ConfigError(f"unknown split kind {kind!r}")


def load_yields(path: str | Path) -> list[YieldRecord]:
    """Read the yields CSV `county,year,yield_ton_per_acre,planted_area_acres`."""
    df = pd.read_csv(path, float_precision="round_trip")
    expected = ["county", "year", "yield_ton_per_acre", "planted_area_acres"]
    if list(df.columns) != expected:
        raise SchemaError(f"{path}: expected columns {expected}, got {list(df.columns)}")
    return [
        YieldRecord(
            county=str(r.county),
            year=int(r.year),
            yield_ton_per_acre=float(r.yield_ton_per_acre),
            planted_area_acres=float(r.planted_area_acres),
        )
        for r in df.itertuples(index=False)
    ]


def save_yields(records: list[YieldRecord], path: str | Path) -> None:
    df = pd.DataFrame(
        {
            "county": [r.county for r in records],
            "year": [r.year for r in records],
            "yield_ton_per_acre": [r.yield_ton_per_acre for r in records],
            "planted_area_acres": [r.planted_area_acres for r in records],
        }
    )
    df.to_csv(path, index=False)


def load_feature_rows(path: str | Path) -> list[FeatureVectorRaw]:
    """Read the feature CSV `county,year,<13 feature columns>`."""
    df = pd.read_csv(path, comment="#", float_precision="round_trip")
    if list(df.columns[:2]) != ["county", "year"]:
        raise SchemaError(f"{path}: first columns must be county,year")
    names = list(df.columns[2:])
    if len(names) != N_CLIMATE_FEATURES:
        raise SchemaError(f"{path}: expected {N_CLIMATE_FEATURES} feature columns, got {len(names)}")
    return [
        FeatureVectorRaw(
            county=str(row["county"]),
            year=int(row["year"]),
            features={n: float(row[n]) for n in names},
        )
        for _, row in df.iterrows()
    ]
