"""Input validation helpers shared by the estimator API and the CLI."""

from __future__ import annotations

import numpy as np

__all__ = ["check_score_pairs", "check_binary_labels", "check_probability"]


def check_score_pairs(X, name: str = "X") -> np.ndarray:
    """Coerce to a finite (n, 2) float array."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != 2:
        raise ValueError(f"{name} must be an (n, 2) array of paired scores, got shape {X.shape}")
    if X.shape[0] == 0:
        raise ValueError(f"{name} must contain at least one row")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite scores")
    return X


def check_binary_labels(y, n: int, name: str = "y") -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {y.shape}")
    vals = np.unique(y)
    if not np.all(np.isin(vals, (0, 1))):
        raise ValueError(f"{name} must contain only 0/1 labels")
    return y.astype(np.uint8)


def check_probability(value: float, name: str, open_interval: bool = False) -> float:
    value = float(value)
    if open_interval:
        if not 0.0 < value < 1.0:
            raise ValueError(f"{name} must lie in (0, 1), got {value}")
    elif not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value
