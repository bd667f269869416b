"""Input validation helpers shared by the estimators and the CLI."""

from __future__ import annotations

import numpy as np

from .grid import GridSpec


def check_field(X, grid: GridSpec = None, name: str = "X") -> np.ndarray:
    """Return ``X`` as a finite float64 ``(M, M)`` array on an admissible grid."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be a square 2-D height field, got shape {arr.shape}")
    M = arr.shape[0]
    if M < 4 or M % 2:
        raise ValueError(f"{name} needs an even number (>= 4) of points per side, got {M}")
    if grid is not None and arr.shape != grid.shape:
        raise ValueError(f"{name} has shape {arr.shape}, grid expects {grid.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_fields(X, name: str = "X") -> np.ndarray:
    """Accept one field or a stack ``(n, M, M)``; always return a stack."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 2:
        return check_field(arr, name=name)[None]
    if arr.ndim != 3:
        raise ValueError(f"{name} must be a field (M, M) or a stack (n, M, M), got shape {arr.shape}")
    return np.stack([check_field(a, name=name) for a in arr])


def check_positive(value, name: str) -> float:
    value = float(value)
    if not value > 0 or not np.isfinite(value):
        raise ValueError(f"{name} must be a positive finite number, got {value}")
    return value
