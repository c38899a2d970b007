"""Input validation helpers shared by the estimator layer and the CLI."""

from __future__ import annotations

import numpy as np

from .data import VectorSet, as_vectors


def check_vectors(data, *, min_rows: int = 1, name: str = "X") -> np.ndarray:
    """Coerce to a float32 2-d array and validate shape/finiteness."""
    if isinstance(data, VectorSet):
        arr = data.vectors
    else:
        arr = as_vectors(data)
    if arr.shape[0] < min_rows:
        raise ValueError(f"{name} needs at least {min_rows} rows, got {arr.shape[0]}")
    return arr


def check_queries(queries, dim: int, *, name: str = "Q") -> np.ndarray:
    """Validate a query matrix against the indexed dimensionality."""
    arr = check_vectors(queries, name=name)
    if arr.shape[1] != dim:
        raise ValueError(
            f"{name} has dimension {arr.shape[1]}, index expects {dim}")
    return arr


def check_positive_int(value, name: str) -> int:
    v = int(value)
    if v < 1:
        raise ValueError(f"{name} must be a positive integer, got {value}")
    return v
