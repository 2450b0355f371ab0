"""Regression skill metrics."""

from __future__ import annotations

import numpy as np

from ..errors import NumericalError, SchemaError

__all__ = ["r2_score", "rmse"]


def r2_score(y: np.ndarray, yhat: np.ndarray) -> float:
    """Coefficient of determination, 1 - SS_res / SS_tot."""
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise SchemaError(f"r2_score: length mismatch {y.shape} vs {yhat.shape}")
    if len(y) < 2:
        raise NumericalError("r2_score: need at least 2 observations")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise NumericalError("r2_score: undefined for constant observations")
    ss_res = float(np.sum((y - yhat) ** 2))
    return 1.0 - ss_res / ss_tot


def rmse(y: np.ndarray, yhat: np.ndarray) -> float:
    """Root mean squared error."""
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise SchemaError(f"rmse: length mismatch {y.shape} vs {yhat.shape}")
    if len(y) < 1:
        raise NumericalError("rmse: need at least 1 observation")
    return float(np.sqrt(np.mean((y - yhat) ** 2)))
