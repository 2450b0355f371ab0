"""Benchmark protocol: k-fold cross-validation plus a single holdout split.

CV metrics are computed on the pooled out-of-fold predictions (one number
per metric, matching a single-cell report), with the normalizer refit inside
every fold on that fold's training rows. The holdout refits everything on
the training fraction. Both splits derive from one seed via purpose tags, so
the protocols are independent but jointly reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .dataset import FeatureTable, Holdout, KFold, fit_normalizer, make_split
from .errors import ConfigError, SchemaError
from .learners import (
    ForestConfig,
    LearnerConfig,
    RidgeConfig,
    fit,
    r2_score,
    rmse,
    with_seed,
)
from .rng import derive_seed
from .stacking import StackConfig, fit_stack, high_quality_config, predict_stack

__all__ = [
    "ModelEntry",
    "BenchmarkReport",
    "default_benchmark_models",
    "run_benchmark",
    "compare_rows",
    "save_report",
    "load_report",
    "format_report",
]

METRIC_CELLS = ("cv_r2", "cv_rmse", "split_r2", "split_rmse")


@dataclass
class ModelEntry:
    name: str
    display_name: str
    cv_r2: float = np.nan
    cv_rmse: float = np.nan
    split_r2: float = np.nan
    split_rmse: float = np.nan


@dataclass
class BenchmarkReport:
    entries: list[ModelEntry]
    seed: int
    k: int
    test_fraction: float
    n_rows: int
    cv_fold_train_sizes: list[int] = field(default_factory=list)
    holdout_train_size: int = 0
    holdout_test_size: int = 0
    normalizer_refit_per_fold: bool = True

    def entry(self, name: str) -> ModelEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)


def default_benchmark_models(
    stack: StackConfig | None = None, seed: int = 0
) -> list[tuple[str, StackConfig | LearnerConfig]]:
    """The three-model comparison: stack ensemble, linear model, random forest.

    The linear row is ridge-regularized: with a full county one-hot block the
    unregularized normal equations are singular.
    """
    return [
        ("stack", stack or high_quality_config(seed=seed)),
        ("linear_regression", RidgeConfig()),
        ("random_forest", ForestConfig()),
    ]


_DISPLAY = {
    "stack": "Stack Ensemble",
    "linear_regression": "Linear Regression",
    "random_forest": "Random Forest",
}


def _fit_predictor(spec, table: FeatureTable, train_rows: np.ndarray, seed: int, tag: str):
    """Train one benchmark entry on the given rows; returns rows -> yhat."""
    if isinstance(spec, StackConfig):
        cfg = StackConfig(
            base_configs=spec.base_configs,
            n_layers=spec.n_layers,
            bag_folds=spec.bag_folds,
            bag_repeats=spec.bag_repeats,
            ensemble_iterations=spec.ensemble_iterations,
            preset=spec.preset,
            seed=derive_seed(seed, tag, "stack"),
        )
        ensemble = fit_stack(cfg, table, train_rows)
        return lambda rows: predict_stack(ensemble, table.X[rows])
    normalizer = fit_normalizer(table, train_rows)
    model = fit(
        with_seed(spec, derive_seed(seed, tag, spec.name)),
        normalizer.transform(table.X[train_rows]),
        table.y[train_rows],
    )
    return lambda rows: model.predict(normalizer.transform(table.X[rows]))


def run_benchmark(
    table: FeatureTable,
    models: list[tuple[str, StackConfig | LearnerConfig]],
    k: int = 5,
    test_fraction: float = 0.3,
    seed: int = 0,
    rows: np.ndarray | None = None,
    refit_normalizer_per_fold: bool = True,
) -> BenchmarkReport:
    """Evaluate every model under both protocols on the table's target rows.

    `refit_normalizer_per_fold=False` exists only to demonstrate the leakage
    it causes; the report records which path ran.
    """
    rows = table.rows_with_targets if rows is None else np.asarray(rows)
    if not np.all(np.isfinite(table.y[rows])):
        raise SchemaError("benchmark: all evaluated rows must carry targets")
    n = len(rows)
    if k > n:
        raise ConfigError(f"benchmark: k={k} exceeds {n} rows")

    sub = FeatureTable(
        column_names=list(table.column_names),
        counties=[table.counties[i] for i in rows],
        years=table.years[rows],
        X=table.X[rows],
        y=table.y[rows],
    )
    y = sub.y

    cv_plan = make_split(n, KFold(k=k), seed=derive_seed(seed, "cv-folds"))
    holdout_plan = make_split(n, Holdout(test_fraction), seed=derive_seed(seed, "holdout-split"))
    train_h, test_h = holdout_plan.holdout_rows()

    entries = []
    fold_train_sizes = [len(tr) for tr, _ in cv_plan.folds(0)]
    for name, spec in models:
        pooled = np.empty(n)
        for fold, (train_rows, test_rows) in enumerate(cv_plan.folds(0)):
            maker = _fit_predictor if refit_normalizer_per_fold else _global_norm_predictor
            predictor = maker(spec, sub, train_rows, derive_seed(seed, "cv", fold), name)
            pooled[test_rows] = predictor(test_rows)
        entry = ModelEntry(name=name, display_name=_DISPLAY.get(name, name))
        entry.cv_r2 = r2_score(y, pooled)
        entry.cv_rmse = rmse(y, pooled)

        predictor = _fit_predictor(spec, sub, train_h, derive_seed(seed, "holdout"), name)
        held = predictor(test_h)
        entry.split_r2 = r2_score(y[test_h], held)
        entry.split_rmse = rmse(y[test_h], held)
        entries.append(entry)

    return BenchmarkReport(
        entries=entries,
        seed=seed,
        k=k,
        test_fraction=test_fraction,
        n_rows=n,
        cv_fold_train_sizes=fold_train_sizes,
        holdout_train_size=len(train_h),
        holdout_test_size=len(test_h),
        normalizer_refit_per_fold=refit_normalizer_per_fold,
    )


def _global_norm_predictor(spec, table, train_rows, seed, tag):
    if isinstance(spec, StackConfig):
        raise ConfigError("global-normalizer variant only applies to plain learners")
    normalizer = fit_normalizer(table, np.arange(table.n_rows))
    model = fit(
        with_seed(spec, derive_seed(seed, tag, spec.name)),
        normalizer.transform(table.X[train_rows]),
        table.y[train_rows],
    )
    return lambda rows: model.predict(normalizer.transform(table.X[rows]))


def compare_rows(report: BenchmarkReport) -> dict:
    """Per-cell rankings plus whether the stack is strictly best on all four."""
    rankings: dict[str, list[tuple[str, int]]] = {}
    stack_best = True
    for cell in METRIC_CELLS:
        values = [(e.name, getattr(e, cell)) for e in report.entries]
        reverse = cell.endswith("_r2")  # higher is better for R2, lower for RMSE
        ordered = sorted(values, key=lambda nv: -nv[1] if reverse else nv[1])
        ranks = []
        for pos, (name, val) in enumerate(ordered):
            rank = pos + 1
            # ties share the better rank
            for prev_pos in range(pos):
                if ordered[prev_pos][1] == val:
                    rank = prev_pos + 1
                    break
            ranks.append((name, rank))
        rankings[cell] = ranks
        top = [name for name, r in ranks if r == 1]
        if top != ["stack"]:
            stack_best = False
    return {"rankings": rankings, "stack_best_on_all_cells": stack_best}


def save_report(report: BenchmarkReport, path: str | Path, header_lines: list[str] | None = None) -> None:
    """Write the report CSV (with optional `# key=value` metadata lines)."""
    df = pd.DataFrame(
        {
            "model": [e.name for e in report.entries],
            "cv_r2": [e.cv_r2 for e in report.entries],
            "cv_rmse": [e.cv_rmse for e in report.entries],
            "split_r2": [e.split_r2 for e in report.entries],
            "split_rmse": [e.split_rmse for e in report.entries],
        }
    )
    meta = [
        f"# seed={report.seed}",
        f"# k={report.k}",
        f"# test_fraction={report.test_fraction}",
        f"# n_rows={report.n_rows}",
        f"# cv_fold_train_sizes={','.join(str(s) for s in report.cv_fold_train_sizes)}",
        f"# holdout_train_size={report.holdout_train_size}",
        f"# holdout_test_size={report.holdout_test_size}",
        f"# normalizer_refit_per_fold={report.normalizer_refit_per_fold}",
    ]
    with open(path, "w", newline="") as fh:
        for line in header_lines or []:
            fh.write(line + "\n")
        for line in meta:
            fh.write(line + "\n")
        df.to_csv(fh, index=False)


def load_report(path: str | Path) -> BenchmarkReport:
    meta: dict[str, str] = {}
    with open(path) as fh:
        lines = fh.readlines()
    for line in lines:
        if line.startswith("# ") and "=" in line:
            key, _, value = line[2:].strip().partition("=")
            meta[key] = value
    df = pd.read_csv(path, comment="#", float_precision="round_trip")
    entries = [
        ModelEntry(
            name=str(r.model),
            display_name=_DISPLAY.get(str(r.model), str(r.model)),
            cv_r2=float(r.cv_r2),
            cv_rmse=float(r.cv_rmse),
            split_r2=float(r.split_r2),
            split_rmse=float(r.split_rmse),
        )
        for r in df.itertuples(index=False)
    ]
    return BenchmarkReport(
        entries=entries,
        seed=int(meta.get("seed", 0)),
        k=int(meta.get("k", 0)),
        test_fraction=float(meta.get("test_fraction", 0)),
        n_rows=int(meta.get("n_rows", 0)),
        cv_fold_train_sizes=[int(s) for s in meta.get("cv_fold_train_sizes", "").split(",") if s],
        holdout_train_size=int(meta.get("holdout_train_size", 0)),
        holdout_test_size=int(meta.get("holdout_test_size", 0)),
        normalizer_refit_per_fold=meta.get("normalizer_refit_per_fold", "True") == "True",
    )


def format_report(report: BenchmarkReport) -> str:
    """Aligned four-metric table; '*' marks the best value per column."""
    best = {}
    for cell in METRIC_CELLS:
        vals = [getattr(e, cell) for e in report.entries]
        best[cell] = max(vals) if cell.endswith("_r2") else min(vals)
    headers = ["Model", "Cross-Validation R2", "Cross-Validation RMSE", "Train-Test R2", "Train-Test RMSE"]
    rows = [headers]
    for e in report.entries:
        row = [e.display_name]
        for cell in METRIC_CELLS:
            v = getattr(e, cell)
            mark = "*" if v == best[cell] else " "
            row.append(f"{v:.3f}{mark}")
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(headers))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[j]) for j, cell in enumerate(row)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)
