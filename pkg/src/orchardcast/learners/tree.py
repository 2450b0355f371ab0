"""Axis-aligned regression trees with exhaustive split search.

Splits minimize squared error (population-variance impurity, leaves predict
the mean). Candidate thresholds are midpoints between consecutive distinct
sorted values of each feature; the search is exact, no histogram binning.
Ties in split gain break toward the lowest feature index, then the lowest
threshold, so a tree is a pure function of (data, candidate features, rng).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import SchemaError

__all__ = ["RegressionTree", "grow_tree"]

_LEAF = -1


@dataclass
class RegressionTree:
    """Flat-array tree: node i is a leaf iff feature[i] == -1."""

    feature: np.ndarray  # int32
    threshold: np.ndarray  # float64
    left: np.ndarray  # int32
    right: np.ndarray  # int32
    value: np.ndarray  # float64 (node mean)
    n_features: int

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise SchemaError(f"tree expects {self.n_features} columns, got {X.shape}")
        node = np.zeros(len(X), dtype=np.int32)
        active = self.feature[node] != _LEAF
        while active.any():
            rows = np.flatnonzero(active)
            cur = node[rows]
            go_left = X[rows, self.feature[cur]] < self.threshold[cur]
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])
            active[rows] = self.feature[node[rows]] != _LEAF
        return self.value[node]

    @property
    def n_nodes(self) -> int:
        return len(self.feature)


def _best_split(
    X: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray,
    candidates: np.ndarray,
    min_leaf: int,
) -> tuple[int, float] | None:
    """Best (feature, threshold) over the candidate columns, or None.

    Maximizes sum_left^2/n_left + sum_right^2/n_right, equivalent to the
    squared-error gain up to the shared parent term. All thresholds of all
    candidate columns are scored in one pass via per-column prefix sums.
    """
    n = len(rows)
    sub = X[np.ix_(rows, candidates)]
    order = np.argsort(sub, axis=0, kind="stable")
    xs = np.take_along_axis(sub, order, axis=0)
    ys = y[rows][order]

    csum = np.cumsum(ys, axis=0)
    total = csum[-1]
    left_n = np.arange(1, n, dtype=np.float64)[:, None]
    left_sum = csum[:-1]
    score = left_sum**2 / left_n + (total - left_sum) ** 2 / (n - left_n)

    valid = xs[1:] > xs[:-1]
    if min_leaf > 1:
        valid[: min_leaf - 1] = False
        valid[n - min_leaf :] = False
    if not valid.any():
        return None
    score = np.where(valid, score, -np.inf)

    parent = float(total[0]) ** 2 / n
    best = float(score.max())
    if best - parent <= 0.0:
        return None
    # mathematically tied splits (same row partition reached through different
    # columns) differ only by summation-order rounding; group scores within a
    # relative tolerance of the max and take the first in feature-major order:
    # lowest candidate index, then lowest threshold (positions ascend in value)
    tol = 1e-12 * max(1.0, abs(best))
    flat = int(np.argmax(score.T >= best - tol))
    j = flat // (n - 1)
    i = flat % (n - 1)
    threshold = (float(xs[i, j]) + float(xs[i + 1, j])) / 2.0
    return int(candidates[j]), threshold


def grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray,
    *,
    max_depth: int | None,
    min_leaf: int,
    n_candidate_features: int | None = None,
    rng: np.random.Generator | None = None,
) -> RegressionTree:
    """Grow one tree on the given rows (repeats allowed, e.g. bootstrap).

    When `n_candidate_features` is set, each split considers a fresh random
    subset of columns drawn from `rng`; otherwise all columns compete.
    """
    n_features = X.shape[1]
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def new_node(mean: float) -> int:
        feature.append(_LEAF)
        threshold.append(0.0)
        left.append(_LEAF)
        right.append(_LEAF)
        value.append(mean)
        return len(feature) - 1

    def build(node_rows: np.ndarray, depth: int) -> int:
        ysub = y[node_rows]
        node = new_node(float(ysub.mean()))
        if max_depth is not None and depth >= max_depth:
            return node
        if len(node_rows) < 2 * min_leaf or np.ptp(ysub) == 0.0:
            return node
        if n_candidate_features is not None and n_candidate_features < n_features:
            candidates = np.sort(rng.choice(n_features, size=n_candidate_features, replace=False))
        else:
            candidates = np.arange(n_features)
        split = _best_split(X, y, node_rows, candidates, min_leaf)
        if split is None:
            return node
        j, thr = split
        go_left = X[node_rows, j] < thr
        feature[node] = j
        threshold[node] = thr
        left[node] = build(node_rows[go_left], depth + 1)
        right[node] = build(node_rows[~go_left], depth + 1)
        return node

    build(np.asarray(rows, dtype=np.int64), 0)
    return RegressionTree(
        feature=np.array(feature, dtype=np.int32),
        threshold=np.array(threshold),
        left=np.array(left, dtype=np.int32),
        right=np.array(right, dtype=np.int32),
        value=np.array(value),
        n_features=n_features,
    )
