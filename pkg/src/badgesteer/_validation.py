"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array


def check_profile_array(X, *, name="X") -> np.ndarray:
    """Validate an ``(n, 2)`` array of (consistency, intensity) pairs."""
    X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_min_samples=1, input_name=name)
    if X.shape[1] != 2:
        raise ValueError(f"{name} must have two columns (consistency, intensity); got {X.shape[1]}")
    if (X < 0).any():
        raise ValueError(f"{name} contains negative consistency or intensity values")
    return X


def check_binary_labels(y, n_samples: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n_samples:
        raise ValueError(f"labels must be a vector of length {n_samples}")
    values = np.unique(y)
    if not np.isin(values, [0, 1]).all():
        raise ValueError(f"labels must be binary 0/1 (or bool); got values {values[:5]}")
    return y.astype(np.int64)


def check_positive_int(value, name: str) -> int:
    if isinstance(value, (bool, np.bool_)) or int(value) != value or value < 1:
        raise ValueError(f"{name} must be a positive integer; got {value!r}")
    return int(value)
