"""Input validation helpers shared by the public functions and estimators."""

from __future__ import annotations

from numbers import Integral, Real

import numpy as np

SYMMETRY_RTOL = 1e-10


def check_square(A, name="A"):
    """Return ``A`` as a float64 array, requiring square trailing dimensions."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ValueError(f"{name} must be a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains NaN or Inf")
    return A


def check_symmetric(A, name="A", rtol=SYMMETRY_RTOL):
    """Validate symmetry up to ``rtol`` relative to the largest entry.

    Returns the exactly symmetrized matrix ``(A + A^T) / 2``.
    """
    A = check_square(A, name)
    At = np.swapaxes(A, -1, -2)
    scale = np.max(np.abs(A), initial=0.0)
    if np.max(np.abs(A - At), initial=0.0) > rtol * max(scale, np.finfo(float).tiny):
        raise ValueError(f"{name} is not symmetric")
    return 0.5 * (A + At)


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, Integral):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_real(value, name, low=None, high=None, low_inclusive=True):
    if isinstance(value, bool) or not isinstance(value, Real):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    value = float(value)
    if not np.isfinite(value):
        raise ValueError(f"{name} must be finite")
    if low is not None and (value < low or (value == low and not low_inclusive)):
        op = ">=" if low_inclusive else ">"
        raise ValueError(f"{name} must be {op} {low}, got {value}")
    if high is not None and value > high:
        raise ValueError(f"{name} must be <= {high}, got {value}")
    return value


def frozen(A):
    """Return a read-only float64 copy of ``A``."""
    A = np.array(A, dtype=np.float64, copy=True)
    A.flags.writeable = False
    return A
