"""Input-validation helpers used by the core modules and the estimators."""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError


def as_float_matrix(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be a 2-D array, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def as_binary_square(x, name: str) -> np.ndarray:
    arr = np.asarray(x)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InvalidInputError(f"{name} must be a square 2-D array, got shape {arr.shape}")
    out = arr.astype(np.int8, copy=True)
    if not np.array_equal(np.asarray(arr, dtype=np.float64), out.astype(np.float64)):
        raise InvalidInputError(f"{name} must be binary")
    if not np.all((out == 0) | (out == 1)):
        raise InvalidInputError(f"{name} must contain only 0/1 entries")
    return out


def check_positive(name: str, value) -> float:
    value = float(value)
    if not value > 0:
        raise InvalidInputError(f"{name} must be positive, got {value}")
    return value


def check_non_negative(name: str, value) -> float:
    value = float(value)
    if not value >= 0:
        raise InvalidInputError(f"{name} must be non-negative, got {value}")
    return value


def check_probability(name: str, value) -> float:
    value = float(value)
    if not 0.0 < value < 1.0:
        raise InvalidInputError(f"{name} must lie in (0, 1), got {value}")
    return value


def check_index(name: str, value: int, n: int) -> int:
    value = int(value)
    if not 0 <= value < n:
        raise InvalidInputError(f"{name}={value} out of range [0, {n})")
    return value
