"""Bagged random forest regressor.

Each tree gets its own generator derived from (seed, tree index), fixed
before any work starts, so growing trees in parallel cannot change the
result; predictions average trees in index order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..errors import SchemaError
from ..rng import derive_rng
from .tree import RegressionTree, grow_tree

__all__ = ["ForestModel", "fit_forest", "thread_count"]


def thread_count() -> int:
    """Worker cap from ORCHARDCAST_THREADS (default 1)."""
    raw = os.environ.get("ORCHARDCAST_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass
class ForestModel:
    trees: list[RegressionTree]
    columns: list[str] | None = None

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.trees[0].n_features:
            raise SchemaError(f"forest expects {self.trees[0].n_features} columns, got {X.shape}")
        if len(X) == 0:
            return np.empty(0)
        stacked = np.stack([t.predict(X) for t in self.trees])
        return stacked.mean(axis=0)


def fit_forest(
    X: np.ndarray,
    y: np.ndarray,
    *,
    n_trees: int,
    min_leaf: int,
    max_depth: int | None,
    feature_fraction: float,
    bootstrap: bool,
    seed: int,
    columns: list[str] | None = None,
) -> ForestModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise SchemaError(f"forest: X {X.shape} incompatible with y {y.shape}")
    if len(y) < 2:
        raise SchemaError("forest: need at least 2 rows")
    n, p = X.shape
    n_candidates = max(1, int(p * feature_fraction + 0.5))
    if n_candidates >= p:
        n_candidates = None  # all features compete, no draws consumed

    def one_tree(i: int) -> RegressionTree:
        rng = derive_rng(seed, "tree", i)
        rows = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        return grow_tree(
            X,
            y,
            rows,
            max_depth=max_depth,
            min_leaf=min_leaf,
            n_candidate_features=n_candidates,
            rng=rng,
        )

    workers = min(thread_count(), n_trees)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trees = list(pool.map(one_tree, range(n_trees)))
    else:
        trees = [one_tree(i) for i in range(n_trees)]
    return ForestModel(trees=trees, columns=columns)
