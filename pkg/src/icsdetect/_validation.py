"""Input validation helpers shared by the estimators and functions."""

import numpy as np
from sklearn.utils import check_array

from .exceptions import InputError


def check_data(X, min_rows=2, name="X"):
    """Return `X` as a finite 2-D float array with at least `min_rows` rows."""
    try:
        X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_all_finite=True)
    except ValueError as exc:
        raise InputError(f"{name}: {exc}") from exc
    if X.shape[0] < min_rows:
        raise InputError(f"{name} needs at least {min_rows} rows, got {X.shape[0]}")
    return X


def check_level(value, name):
    """Validate a probability level in the open interval (0, 1)."""
    value = float(value)
    if not 0 < value < 1:
        raise InputError(f"{name} must lie in (0, 1), got {value}")
    return value


def check_k(k, p):
    k = int(k)
    if not 1 <= k <= p:
        raise InputError(f"number of components k must lie in [1, {p}], got {k}")
    return k
