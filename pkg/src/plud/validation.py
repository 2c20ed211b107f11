"""Input validation helpers shared by the estimators and the campaign."""

from __future__ import annotations

import numpy as np


def check_embedding_matrix(X, *, name: str = "X") -> np.ndarray:
    """Coerce to a 2-d float array and reject empty or non-finite input."""
    X = np.asarray(X)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-d, got shape {X.shape}")
    if X.shape[0] == 0:
        raise ValueError(f"{name} has no rows")
    if not np.issubdtype(X.dtype, np.floating):
        X = X.astype(np.float64)
    if not np.isfinite(X).all():
        row = int(np.argwhere(~np.isfinite(X).all(axis=1))[0][0])
        raise ValueError(f"{name} contains non-finite values (row {row})")
    return X


def check_fitted(estimator, attribute: str) -> None:
    if not hasattr(estimator, attribute):
        raise RuntimeError(
            f"{type(estimator).__name__} is not fitted; call fit() first"
        )


def check_confidence(value: float) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"confidence {value} outside [0, 1]")
    return value
