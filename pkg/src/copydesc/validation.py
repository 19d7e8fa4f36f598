"""Input validation helpers shared across modules.

Descriptor data is stored as float32; anything failing these checks raises
:class:`~copydesc.exceptions.ValidationError` before it can poison a kernel.
"""
from __future__ import annotations

import numpy as np

from .exceptions import DimensionMismatchError, ValidationError, ZeroVectorError

UNIT_NORM_ATOL = 1e-4


def as_vector(v, name: str = "vector", dtype=np.float32) -> np.ndarray:
    """Coerce to a 1-D array of `dtype`, requiring finite entries."""
    arr = np.asarray(v, dtype=dtype)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ValidationError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains NaN or Inf")
    return arr


def as_matrix(X, name: str = "X", dtype=np.float32) -> np.ndarray:
    """Coerce to a 2-D C-contiguous array of `dtype`, requiring finite entries."""
    arr = np.ascontiguousarray(X, dtype=dtype)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValidationError(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains NaN or Inf")
    return arr


def check_same_dim(a: np.ndarray, b: np.ndarray, a_name: str = "a", b_name: str = "b") -> None:
    if a.shape[-1] != b.shape[-1]:
        raise DimensionMismatchError(
            f"{a_name} has dimension {a.shape[-1]} but {b_name} has {b.shape[-1]}"
        )


def check_no_zero_rows(X: np.ndarray, name: str = "X") -> None:
    norms = np.linalg.norm(X.astype(np.float64, copy=False), axis=-1)
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise ZeroVectorError(f"{name} contains a zero vector at row {bad}")


def check_unit_rows(X: np.ndarray, name: str = "X", atol: float = UNIT_NORM_ATOL) -> None:
    norms = np.linalg.norm(X.astype(np.float64, copy=False), axis=-1)
    off = np.abs(norms - 1.0)
    if np.any(off > atol):
        bad = int(np.argmax(off))
        raise ValidationError(
            f"{name} must contain unit-norm vectors; row {bad} has norm {norms[bad]:.6g}"
        )
