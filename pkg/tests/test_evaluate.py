import numpy as np
import pytest

from conftest import toy_table
from orchardcast.errors import ConfigError
from orchardcast.evaluate import (
    compare_rows,
    default_benchmark_models,
    format_report,
    load_report,
    run_benchmark,
    save_report,
)
from orchardcast.learners import ForestConfig, RidgeConfig
from orchardcast.stacking import StackConfig


def fast_models():
    stack = StackConfig(
        base_configs=(RidgeConfig(),), n_layers=1, bag_folds=3, bag_repeats=1,
        ensemble_iterations=5, seed=0,
    )
    return [
        ("stack", stack),
        ("linear_regression", RidgeConfig()),
        ("random_forest", ForestConfig(n_trees=15)),
    ]


class TestRunBenchmark:
    def test_report_shape_and_sizes(self):
        table = toy_table(n_rows=100, seed=1)
        report = run_benchmark(table, fast_models(), k=5, test_fraction=0.3, seed=0)
        assert len(report.entries) == 3
        for entry in report.entries:
            for cell in ("cv_r2", "cv_rmse", "split_r2", "split_rmse"):
                assert np.isfinite(getattr(entry, cell))
            assert entry.cv_rmse >= 0 and entry.split_rmse >= 0
        assert report.cv_fold_train_sizes == [80] * 5
        assert report.holdout_train_size == 70 and report.holdout_test_size == 30
        assert report.normalizer_refit_per_fold is True

    def test_perfect_linear_data_scores_one(self):
        table = toy_table(n_rows=80, noise=0.0, seed=2)
        # drop the quadratic term so ridge can represent the target exactly
        rng = np.random.default_rng(2)
        table.y = 1.5 + 0.6 * table.X[:, 0] + 0.01 * table.X[:, 42:58].sum(axis=1)
        report = run_benchmark(table, [("linear_regression", RidgeConfig(lam=1e-8))], k=5, seed=0)
        assert report.entry("linear_regression").cv_r2 == pytest.approx(1.0, abs=1e-6)

    def test_deterministic_per_seed(self):
        table = toy_table(n_rows=60, seed=3)
        a = run_benchmark(table, fast_models(), k=4, seed=5)
        b = run_benchmark(table, fast_models(), k=4, seed=5)
        for ea, eb in zip(a.entries, b.entries):
            assert ea.cv_r2 == eb.cv_r2 and ea.split_rmse == eb.split_rmse
        c = run_benchmark(table, fast_models(), k=4, seed=6)
        assert any(
            ea.cv_r2 != ec.cv_r2 for ea, ec in zip(a.entries, c.entries)
        )

    def test_insufficient_rows(self):
        table = toy_table(n_rows=8, seed=4)
        with pytest.raises(ConfigError, match="exceeds"):
            run_benchmark(table, fast_models(), k=10, seed=0)

    def test_cv_training_fraction_rule(self):
        table = toy_table(n_rows=97, seed=5)
        report = run_benchmark(table, [("linear_regression", RidgeConfig())], k=5, seed=0)
        n = report.n_rows
        for size in report.cv_fold_train_sizes:
            assert abs(size - (5 - 1) / 5 * n) <= 1
        assert abs(report.holdout_train_size - round(0.7 * n)) <= 1

    def test_per_fold_normalization_differs_from_global(self):
        # non-i.i.d. column: a strong drift makes fold-local statistics differ
        table = toy_table(n_rows=80, seed=6)
        table.X[:, 0] = np.linspace(0, 50, 80)
        table.X[:, 13] = table.X[:, 0] ** 2
        table.y = table.y + 0.3 * table.X[:, 0]
        models = [("linear_regression", RidgeConfig())]
        per_fold = run_benchmark(table, models, k=4, seed=1)
        global_fit = run_benchmark(table, models, k=4, seed=1, refit_normalizer_per_fold=False)
        assert per_fold.normalizer_refit_per_fold is True
        assert global_fit.normalizer_refit_per_fold is False
        assert per_fold.entry("linear_regression").cv_rmse != global_fit.entry("linear_regression").cv_rmse


class TestCompareRows:
    def make_report(self, stack_vals, linear_vals, forest_vals):
        from orchardcast.evaluate import BenchmarkReport, ModelEntry

        def entry(name, vals):
            return ModelEntry(name, name, *vals)

        return BenchmarkReport(
            entries=[
                entry("stack", stack_vals),
                entry("linear_regression", linear_vals),
                entry("random_forest", forest_vals),
            ],
            seed=0, k=5, test_fraction=0.3, n_rows=100,
        )

    def test_stack_best_everywhere(self):
        report = self.make_report(
            (0.8, 0.10, 0.75, 0.12), (0.7, 0.14, 0.72, 0.13), (0.6, 0.16, 0.60, 0.17)
        )
        result = compare_rows(report)
        assert result["stack_best_on_all_cells"] is True
        assert result["rankings"]["cv_r2"][0] == ("stack", 1)

    def test_tie_reported_and_flag_false(self):
        report = self.make_report(
            (0.8, 0.10, 0.75, 0.12), (0.8, 0.14, 0.72, 0.13), (0.6, 0.16, 0.60, 0.17)
        )
        result = compare_rows(report)
        assert result["stack_best_on_all_cells"] is False
        ranks = dict(result["rankings"]["cv_r2"])
        assert ranks["stack"] == 1 and ranks["linear_regression"] == 1

    def test_rmse_ranked_ascending(self):
        report = self.make_report(
            (0.8, 0.20, 0.75, 0.12), (0.7, 0.14, 0.72, 0.13), (0.6, 0.16, 0.60, 0.17)
        )
        result = compare_rows(report)
        assert result["rankings"]["cv_rmse"][0][0] == "linear_regression"
        assert result["stack_best_on_all_cells"] is False


def test_report_round_trip(tmp_path):
    table = toy_table(n_rows=60, seed=7)
    report = run_benchmark(table, fast_models(), k=4, seed=2)
    save_report(report, tmp_path / "report.csv")
    again = load_report(tmp_path / "report.csv")
    assert [e.name for e in again.entries] == [e.name for e in report.entries]
    for ea, eb in zip(report.entries, again.entries):
        for cell in ("cv_r2", "cv_rmse", "split_r2", "split_rmse"):
            assert getattr(ea, cell) == getattr(eb, cell)
    assert again.seed == report.seed
    assert again.cv_fold_train_sizes == report.cv_fold_train_sizes
    assert again.holdout_train_size == report.holdout_train_size


def test_format_report_layout():
    table = toy_table(n_rows=60, seed=8)
    report = run_benchmark(table, fast_models(), k=4, seed=2)
    text = format_report(report)
    lines = text.splitlines()
    assert "Cross-Validation R2" in lines[0]
    assert "Train-Test RMSE" in lines[0]
    assert len(lines) == 2 + 3  # header, rule, three model rows
    assert "*" in text


def test_default_models_roster():
    models = default_benchmark_models(seed=1)
    assert [name for name, _ in models] == ["stack", "linear_regression", "random_forest"]
    assert isinstance(models[0][1], StackConfig)
