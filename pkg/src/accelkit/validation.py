"""Input validation helpers used at public entry points.

All helpers return float64 ndarrays (copying only when needed) and raise
DimensionMismatchError / ValueError with the offending argument named, so
error messages from the solver surface stay actionable.
"""

from __future__ import annotations

import numpy as np

from .exceptions import DimensionMismatchError

__all__ = ["as_vector", "as_square_dense", "check_finite", "check_symmetric"]


def as_vector(x, n=None, name="x"):
    """Coerce to a finite 1-D float64 array, optionally of length n."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatchError(f"{name} must be 1-D, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise DimensionMismatchError(f"{name} has length {arr.shape[0]}, expected {n}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def as_square_dense(a, name="matrix"):
    """Coerce to a finite square 2-D float64 array."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionMismatchError(f"{name} must be square 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_finite(x, name="array"):
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite entries")
    return x


def check_symmetric(a, tol=1e-10, name="matrix"):
    """Raise if a is not symmetric to tol, relative to its largest entry."""
    scale = max(np.max(np.abs(a)), 1.0) if a.size else 1.0
    dev = np.max(np.abs(a - a.T)) if a.size else 0.0
    if dev > tol * scale:
        raise ValueError(f"{name} is not symmetric: max asymmetry {dev:.3e}")
    return a
