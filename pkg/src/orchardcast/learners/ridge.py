"""Ridge linear regression with an unpenalized intercept."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericalError, SchemaError

__all__ = ["RidgeModel", "fit_ridge"]


@dataclass
class RidgeModel:
    coef: np.ndarray
    intercept: float
    columns: list[str] | None = None

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.coef):
            raise SchemaError(f"ridge expects {len(self.coef)} columns, got {X.shape}")
        return X @ self.coef + self.intercept


def fit_ridge(X: np.ndarray, y: np.ndarray, lam: float, columns: list[str] | None = None) -> RidgeModel:
    """Solve (Xc'Xc + lam I) w = Xc'y on centered data.

    Centering keeps the intercept out of the penalty. The system is solved by
    Cholesky factorization; with lam = 0 a rank-deficient design fails the
    factorization and is reported as such rather than silently regularized.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise SchemaError(f"ridge: X {X.shape} incompatible with y {y.shape}")
    if len(y) < 2:
        raise SchemaError("ridge: need at least 2 rows")
    if lam < 0:
        raise NumericalError(f"ridge: lam must be >= 0, got {lam}")

    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    Xc = X - x_mean
    yc = y - y_mean
    A = Xc.T @ Xc + lam * np.eye(X.shape[1])
    singular_msg = "ridge: singular normal equations (collinear or constant columns); use lam > 0"
    try:
        L = np.linalg.cholesky(A)
        w = np.linalg.solve(L.T, np.linalg.solve(L, Xc.T @ yc))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(singular_msg) from exc
    # rank deficiency shows up as a collapsed pivot (~sqrt(eps) of the scale)
    # rather than a LAPACK failure; refuse those factorizations at lam = 0
    diag = np.diagonal(L)
    if lam == 0.0 and (not np.all(np.isfinite(w)) or diag.min() <= 1e-7 * diag.max()):
        raise NumericalError(singular_msg)
    return RidgeModel(coef=w, intercept=y_mean - float(x_mean @ w), columns=columns)
