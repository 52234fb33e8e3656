"""Input validation helpers shared by the estimators.

scikit-learn's ``check_array`` rejects complex input, so the complex-valued
checks live here.
"""
import numbers

import numpy as np

from .exceptions import ConfigurationError, DimensionError


def check_complex_array(X, name="X", ndim=2, min_cols=1):
    """Return ``X`` as a C-contiguous complex128 array with ``ndim`` axes."""
    arr = np.asarray(X)
    if arr.dtype == object:
        raise DimensionError(f"{name} must be numeric")
    arr = np.ascontiguousarray(arr, dtype=np.complex128)
    if arr.ndim != ndim:
        raise DimensionError(f"{name} must have {ndim} dimensions, got shape {arr.shape}")
    if ndim == 2 and arr.shape[1] < min_cols:
        raise DimensionError(f"{name} needs at least {min_cols} column(s), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinity")
    return arr


def check_length(arr, n, name="x"):
    if arr.shape[0] != n:
        raise DimensionError(f"{name} has {arr.shape[0]} rows, expected {n}")


def check_positive(value, name, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ConfigurationError(f"{name} must be a finite real number, got {value!r}")
    if (strict and value <= 0) or (not strict and value < 0):
        bound = "> 0" if strict else ">= 0"
        raise ConfigurationError(f"{name} must be {bound}, got {value!r}")
    return float(value)


def check_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ConfigurationError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigurationError(f"{name} must be >= {minimum}, got {value!r}")
    return int(value)


def is_power_of_two(n):
    return n >= 1 and (n & (n - 1)) == 0
