"""Gradient-boosted regression trees (squared-error loss).

Stagewise residual fitting with shrinkage: F_0 is the target mean, each
round fits a depth-limited tree to the current residuals (optionally on a
row subsample) and adds its shrunken predictions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import SchemaError
from ..rng import derive_rng
from .tree import RegressionTree, grow_tree

__all__ = ["GBDTModel", "fit_gbdt"]


@dataclass
class GBDTModel:
    base: float
    learning_rate: float
    trees: list[RegressionTree]
    columns: list[str] | None = None

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or (self.trees and X.shape[1] != self.trees[0].n_features):
            raise SchemaError(f"gbdt expects {self.trees[0].n_features} columns, got {X.shape}")
        out = np.full(len(X), self.base)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out


def fit_gbdt(
    X: np.ndarray,
    y: np.ndarray,
    *,
    n_rounds: int,
    learning_rate: float,
    max_depth: int,
    min_leaf: int,
    row_subsample: float,
    seed: int,
    columns: list[str] | None = None,
) -> GBDTModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise SchemaError(f"gbdt: X {X.shape} incompatible with y {y.shape}")
    if len(y) < 2:
        raise SchemaError("gbdt: need at least 2 rows")
    n = len(y)
    base = float(y.mean())
    current = np.full(n, base)
    trees: list[RegressionTree] = []
    for m in range(n_rounds):
        residual = y - current
        if row_subsample < 1.0:
            rng = derive_rng(seed, "round", m)
            size = max(2, int(row_subsample * n + 0.5))
            rows = np.sort(rng.choice(n, size=size, replace=False))
        else:
            rows = np.arange(n)
        tree = grow_tree(X, residual, rows, max_depth=max_depth, min_leaf=min_leaf)
        current += learning_rate * tree.predict(X)
        trees.append(tree)
    return GBDTModel(base=base, learning_rate=learning_rate, trees=trees, columns=columns)
