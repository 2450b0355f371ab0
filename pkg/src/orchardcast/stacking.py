"""Multi-layer stack ensembling with repeated k-fold bagging.

Layer 1 bags each base learner over repeated k-fold splits, producing both a
bagged predictor (mean over all fold models) and leakage-free out-of-fold
predictions for every training row. Higher layers see the original columns
plus the previous layer's OOF columns; at inference they see bagged
predictions instead. A greedy forward selection with replacement over the
last layer's OOF matrix sets the final weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import FeatureTable, KFold, Normalizer, fit_normalizer, make_split
from .errors import ConfigError, NumericalError, SchemaError
from .learners import (
    FittedModel,
    ForestConfig,
    GBDTConfig,
    LearnerConfig,
    RidgeConfig,
    fit,
    r2_score,
    rmse,
    with_seed,
)
from .rng import derive_rng, derive_seed

__all__ = [
    "StackConfig",
    "BaggedModel",
    "StackEnsemble",
    "ImportanceReport",
    "high_quality_config",
    "fit_bagged",
    "fit_stack",
    "predict_stack",
    "greedy_ensemble_weights",
    "permutation_importance",
]


@dataclass(frozen=True)
class StackConfig:
    base_configs: tuple[LearnerConfig, ...]
    n_layers: int = 2
    bag_folds: int = 5
    bag_repeats: int = 2
    ensemble_iterations: int = 25
    preset: str = "high-quality"
    seed: int = 0

    def __post_init__(self):
        if not self.base_configs:
            raise ConfigError("stack: at least one base learner required")
        if self.n_layers < 1:
            raise ConfigError(f"stack: n_layers must be >= 1, got {self.n_layers}")
        if self.bag_folds < 2:
            raise ConfigError(f"stack: bag_folds must be >= 2, got {self.bag_folds}")
        if self.bag_repeats < 1:
            raise ConfigError(f"stack: bag_repeats must be >= 1, got {self.bag_repeats}")
        if self.ensemble_iterations < 1:
            raise ConfigError("stack: ensemble_iterations must be >= 1")


def high_quality_config(seed: int = 0, **overrides) -> StackConfig:
    """The single supported preset: ridge + forest + gbdt, 2 layers, 5x2 bagging."""
    return StackConfig(
        base_configs=(RidgeConfig(), ForestConfig(), GBDTConfig()),
        seed=seed,
        **overrides,
    )


@dataclass
class BaggedModel:
    """k x r fold models of one learner plus their averaged OOF predictions."""

    config: LearnerConfig
    k: int
    repeats: int
    seed: int
    models: list[FittedModel]  # ordered by (repeat, fold)
    oof: np.ndarray  # (n_train,) mean over repeats
    fold_assignments: np.ndarray  # (repeats, n_train) fold index per row
    # audit trail: per (repeat, fold), the training row ids the model saw
    train_row_ids: list[np.ndarray] = field(default_factory=list)

    def predict(self, X: np.ndarray) -> np.ndarray:
        stacked = np.stack([m.predict(X) for m in self.models])
        return stacked.mean(axis=0)


def fit_bagged(
    config: LearnerConfig,
    X: np.ndarray,
    y: np.ndarray,
    k: int,
    repeats: int,
    seed: int,
    split_seed: int | None = None,
) -> BaggedModel:
    """Repeated k-fold bagging of one learner.

    Every row is predicted exactly once per repeat by a model that never
    trained on it; the stored OOF prediction averages the repeats. Passing
    `split_seed` shares one fold partition among several bagged learners
    (stack layers do this, so their models see identical folds).
    """
    n = len(y)
    if k > n:
        raise ConfigError(f"bagging: k={k} exceeds {n} rows")
    if split_seed is None:
        split_seed = derive_seed(seed, "bag-folds")
    plan = make_split(n, KFold(k=k, repeats=repeats), seed=split_seed)
    models: list[FittedModel] = []
    train_row_ids: list[np.ndarray] = []
    oof_sum = np.zeros(n)
    for rep in range(repeats):
        for fold, (train_rows, test_rows) in enumerate(plan.folds(rep)):
            fold_cfg = with_seed(config, derive_seed(seed, "fold-model", rep, fold))
            try:
                model = fit(fold_cfg, X[train_rows], y[train_rows])
            except Exception as exc:
                raise type(exc)(f"bagging repeat {rep} fold {fold}: {exc}") from exc
            models.append(model)
            train_row_ids.append(train_rows)
            oof_sum[test_rows] += model.predict(X[test_rows])
    return BaggedModel(
        config=config,
        k=k,
        repeats=repeats,
        seed=seed,
        models=models,
        oof=oof_sum / repeats,
        fold_assignments=plan.assignments,
        train_row_ids=train_row_ids,
    )


@dataclass
class StackEnsemble:
    """Trained multi-layer bagged stack with greedy final weights."""

    config: StackConfig
    normalizer: Normalizer
    column_names: list[str]  # original feature-table columns
    layers: list[list[BaggedModel]]
    weights: np.ndarray  # over last-layer models, non-negative, sums to 1
    seed: int
    oof_rmse: float  # weighted last-layer OOF RMSE on the training rows

    @property
    def last_layer(self) -> list[BaggedModel]:
        return self.layers[-1]


def greedy_ensemble_weights(
    predictions: np.ndarray, y: np.ndarray, iterations: int
) -> tuple[np.ndarray, float]:
    """Forward selection with replacement; weights are selection frequencies.

    Starts from the single best model and at each step adds the candidate
    that minimizes RMSE of the running average (ties to the lowest model
    index). Returns the weights of the best ensemble seen, so the result is
    never worse than the best single model.
    """
    n, m = predictions.shape[1], predictions.shape[0]
    if len(y) != n:
        raise SchemaError("greedy selection: prediction/target length mismatch")
    counts = np.zeros(m, dtype=np.int64)
    running = np.zeros(n)
    best_counts = None
    best_rmse = np.inf
    for step in range(1, iterations + 1):
        cand = (running + predictions) / step  # (m, n) running average per candidate
        cand_rmse = np.sqrt(np.mean((cand - y) ** 2, axis=1))
        pick = int(np.argmin(cand_rmse))  # first minimum: lowest index on ties
        counts[pick] += 1
        running = running + predictions[pick]
        if cand_rmse[pick] < best_rmse:
            best_rmse = float(cand_rmse[pick])
            best_counts = counts.copy()
    weights = best_counts / best_counts.sum()
    return weights, best_rmse


def fit_stack(
    config: StackConfig,
    table: FeatureTable,
    training_rows: np.ndarray | None = None,
) -> StackEnsemble:
    """Fit the full stack on the table's training rows.

    The normalizer is fit on exactly these rows and travels with the
    ensemble, so inference accepts raw feature rows.
    """
    if training_rows is None:
        training_rows = table.rows_with_targets
    training_rows = np.asarray(training_rows)
    if len(training_rows) < 5:
        raise SchemaError(f"stack: need at least 5 training rows, got {len(training_rows)}")
    y = table.y[training_rows]
    if not np.all(np.isfinite(y)):
        raise SchemaError("stack: all training rows must carry targets")

    normalizer = fit_normalizer(table, training_rows)
    X = normalizer.transform(table.X[training_rows])

    layers: list[list[BaggedModel]] = []
    features = X
    for layer_idx in range(config.n_layers):
        split_seed = derive_seed(config.seed, "layer", layer_idx, "folds")
        bagged: list[BaggedModel] = []
        failures: list[str] = []
        for learner_idx, base in enumerate(config.base_configs):
            try:
                bagged.append(
                    fit_bagged(
                        base,
                        features,
                        y,
                        k=config.bag_folds,
                        repeats=config.bag_repeats,
                        seed=derive_seed(config.seed, "layer", layer_idx, "learner", learner_idx),
                        split_seed=split_seed,
                    )
                )
            except (NumericalError, SchemaError) as exc:
                failures.append(f"{base.name}: {exc}")
        if not bagged:
            raise NumericalError(
                f"stack layer {layer_idx + 1}: every base learner failed ({'; '.join(failures)})"
            )
        layers.append(bagged)
        if layer_idx + 1 < config.n_layers:
            features = np.hstack([X] + [b.oof[:, None] for b in bagged])

    oof_matrix = np.stack([b.oof for b in layers[-1]])
    weights, oof_rmse = greedy_ensemble_weights(oof_matrix, y, config.ensemble_iterations)
    return StackEnsemble(
        config=config,
        normalizer=normalizer,
        column_names=list(table.column_names),
        layers=layers,
        weights=weights,
        seed=config.seed,
        oof_rmse=oof_rmse,
    )


def predict_stack(ensemble: StackEnsemble, X_raw: np.ndarray) -> np.ndarray:
    """Predict raw feature rows (original table columns, unnormalized)."""
    X_raw = np.asarray(X_raw, dtype=np.float64)
    if X_raw.ndim != 2 or X_raw.shape[1] != len(ensemble.column_names):
        raise SchemaError(
            f"stack expects {len(ensemble.column_names)} columns, got {X_raw.shape}"
        )
    X = ensemble.normalizer.transform(X_raw)
    features = X
    preds: list[np.ndarray] = []
    for layer_idx, layer in enumerate(ensemble.layers):
        preds = [b.predict(features) for b in layer]
        if layer_idx + 1 < len(ensemble.layers):
            features = np.hstack([X] + [p[:, None] for p in preds])
    stacked = np.stack(preds)
    return ensemble.weights @ stacked


@dataclass
class ImportanceReport:
    """Permutation importance: per-column mean/std R2 drop and rank (1 = top)."""

    columns: list[str]
    mean_drop: np.ndarray
    std_drop: np.ndarray
    rank: np.ndarray
    repeats: int
    seed: int
    baseline_r2: float

    def ordered(self) -> list[tuple[str, float, float, int]]:
        idx = np.argsort(self.rank)
        return [
            (self.columns[i], float(self.mean_drop[i]), float(self.std_drop[i]), int(self.rank[i]))
            for i in idx
        ]


def permutation_importance(
    ensemble: StackEnsemble,
    X_raw: np.ndarray,
    y: np.ndarray,
    repeats: int = 5,
    seed: int = 0,
) -> ImportanceReport:
    """R2 drop from shuffling each column across evaluation rows.

    Columns are permuted one at a time (squares are independent columns);
    drops average over `repeats` reshuffles, each drawn from its own
    (seed, repeat, column) stream.
    """
    X_raw = np.asarray(X_raw, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(X_raw) < 10:
        raise SchemaError(f"permutation importance: need at least 10 rows, got {len(X_raw)}")
    if repeats < 1:
        raise ConfigError("permutation importance: repeats must be >= 1")
    if np.ptp(y) == 0:
        raise NumericalError("permutation importance: constant target, R2 undefined")

    baseline = r2_score(y, predict_stack(ensemble, X_raw))
    n_cols = X_raw.shape[1]
    drops = np.empty((repeats, n_cols))
    for rep in range(repeats):
        for col in range(n_cols):
            perm = derive_rng(seed, "perm", rep, col).permutation(len(X_raw))
            shuffled = X_raw.copy()
            shuffled[:, col] = X_raw[perm, col]
            drops[rep, col] = baseline - r2_score(y, predict_stack(ensemble, shuffled))
    mean_drop = drops.mean(axis=0)
    std_drop = drops.std(axis=0)
    # rank 1 = largest mean drop; ties break toward the lower column index
    order = np.lexsort((np.arange(n_cols), -mean_drop))
    rank = np.empty(n_cols, dtype=np.int64)
    rank[order] = np.arange(1, n_cols + 1)
    return ImportanceReport(
        columns=list(ensemble.column_names),
        mean_drop=mean_drop,
        std_drop=std_drop,
        rank=rank,
        repeats=repeats,
        seed=seed,
        baseline_r2=baseline,
    )
