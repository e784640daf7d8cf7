"""Input validation helpers.

All public entry points funnel array arguments through these checks so the
solvers can assume clean float64 inputs. Marginal mass is validated once at
construction and then trusted; nothing downstream re-normalizes.
"""

import numpy as np

# |sum - 1| tolerance for probability vectors; algebraic identities elsewhere
# are asserted at the same scale.
MARGINAL_MASS_TOL = 1e-12


def as_float_vector(x, name="x"):
    """Coerce to a contiguous 1-D float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return np.ascontiguousarray(arr)


def as_float_matrix(X, name="X"):
    """Coerce to a contiguous 2-D float64 array."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {arr.shape}")
    return np.ascontiguousarray(arr)


def check_marginal(x, name="a", *, strictly_positive=False, normalized=True):
    """Validate a marginal: nonnegative, finite, and (optionally) mass one."""
    arr = as_float_vector(x, name)
    if arr.size == 0:
        raise ValueError(f"{name} must be nonempty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    if np.any(arr < 0):
        raise ValueError(f"{name} contains negative entries")
    if strictly_positive and np.any(arr == 0):
        raise ValueError(f"{name} must be strictly positive")
    if normalized:
        mass = float(arr.sum())
        if abs(mass - 1.0) > MARGINAL_MASS_TOL:
            raise ValueError(f"{name} must sum to 1 within {MARGINAL_MASS_TOL:g}, got {mass!r}")
    return arr


def check_cost_matrix(C, name="C"):
    """Validate a cost matrix: 2-D, finite, nonnegative."""
    arr = as_float_matrix(C, name)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    if np.any(arr < 0):
        raise ValueError(f"{name} contains negative entries")
    return arr


def check_gamma(gamma):
    """Validate the entropic regularization strength."""
    gamma = float(gamma)
    if not np.isfinite(gamma) or gamma <= 0:
        raise ValueError(f"gamma must be a positive finite real, got {gamma!r}")
    return gamma


def check_lengths_match(x, y, name_x="x", name_y="y"):
    if len(x) != len(y):
        raise ValueError(f"{name_x} and {name_y} have mismatched lengths {len(x)} != {len(y)}")
