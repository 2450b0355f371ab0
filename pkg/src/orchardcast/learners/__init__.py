"""From-scratch deterministic base regressors and metrics.

Three learner families cover the tabular baselines: ridge linear regression,
bagged random forests, and gradient-boosted trees. A config fully determines
a fit: same (config, data) gives a bit-identical model.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import ConfigError, SchemaError
from .forest import ForestModel, fit_forest, thread_count
from .gbdt import GBDTModel, fit_gbdt
from .metrics import r2_score, rmse
from .ridge import RidgeModel, fit_ridge
from .tree import RegressionTree, grow_tree

__all__ = [
    "RidgeConfig",
    "ForestConfig",
    "GBDTConfig",
    "LearnerConfig",
    "FittedModel",
    "RidgeModel",
    "ForestModel",
    "GBDTModel",
    "RegressionTree",
    "fit",
    "predict",
    "with_seed",
    "r2_score",
    "rmse",
    "grow_tree",
    "thread_count",
]


@dataclass(frozen=True)
class RidgeConfig:
    lam: float = 1.0
    seed: int = 0
    name = "ridge"

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError(f"ridge: lam must be >= 0, got {self.lam}")


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 300
    min_leaf: int = 2
    max_depth: int | None = None
    feature_fraction: float = 1.0 / 3.0
    bootstrap: bool = True
    seed: int = 0
    name = "random_forest"

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigError(f"forest: n_trees must be >= 1, got {self.n_trees}")
        if self.min_leaf < 1:
            raise ConfigError(f"forest: min_leaf must be >= 1, got {self.min_leaf}")
        if not (0 < self.feature_fraction <= 1):
            raise ConfigError(f"forest: feature_fraction must be in (0, 1], got {self.feature_fraction}")


@dataclass(frozen=True)
class GBDTConfig:
    n_rounds: int = 300
    learning_rate: float = 0.05
    max_depth: int = 3
    min_leaf: int = 5
    row_subsample: float = 0.8
    seed: int = 0
    name = "gbdt"

    def __post_init__(self):
        if self.n_rounds < 1:
            raise ConfigError(f"gbdt: n_rounds must be >= 1, got {self.n_rounds}")
        if self.min_leaf < 1:
            raise ConfigError(f"gbdt: min_leaf must be >= 1, got {self.min_leaf}")
        if not (0 < self.row_subsample <= 1):
            raise ConfigError(f"gbdt: row_subsample must be in (0, 1], got {self.row_subsample}")
        if self.learning_rate <= 0:
            raise ConfigError(f"gbdt: learning_rate must be > 0, got {self.learning_rate}")


LearnerConfig = RidgeConfig | ForestConfig | GBDTConfig
FittedModel = RidgeModel | ForestModel | GBDTModel


def with_seed(config: LearnerConfig, seed: int) -> LearnerConfig:
    return replace(config, seed=seed)


def fit(config: LearnerConfig, X: np.ndarray, y: np.ndarray, columns: list[str] | None = None) -> FittedModel:
    """Train one learner. Requires a complete matrix (no NaNs) and >= 2 rows."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise SchemaError("fit: X and y must be finite (no missing values)")
    if isinstance(config, RidgeConfig):
        return fit_ridge(X, y, lam=config.lam, columns=columns)
    if isinstance(config, ForestConfig):
        return fit_forest(
            X,
            y,
            n_trees=config.n_trees,
            min_leaf=config.min_leaf,
            max_depth=config.max_depth,
            feature_fraction=config.feature_fraction,
            bootstrap=config.bootstrap,
            seed=config.seed,
            columns=columns,
        )
    if isinstance(config, GBDTConfig):
        return fit_gbdt(
            X,
            y,
            n_rounds=config.n_rounds,
            learning_rate=config.learning_rate,
            max_depth=config.max_depth,
            min_leaf=config.min_leaf,
            row_subsample=config.row_subsample,
            seed=config.seed,
            columns=columns,
        )
    raise ConfigError(f"unknown learner config {config!r}")


def predict(model: FittedModel, X: np.ndarray) -> np.ndarray:
    return model.predict(np.asarray(X, dtype=np.float64))
