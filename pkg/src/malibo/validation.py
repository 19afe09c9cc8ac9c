"""Input validation helpers shared across estimators."""

from __future__ import annotations

import numpy as np


def as_float_array(a, name: str = "array", ndim: int | None = None) -> np.ndarray:
    """Convert to a contiguous float64 array and reject non-finite entries."""
    arr = np.asarray(a, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_unit_cube(x, dim: int | None = None, name: str = "x") -> np.ndarray:
    """Validate an encoded point (or batch) against the unit hypercube."""
    arr = np.asarray(x, dtype=np.float64)
    width = arr.shape[-1] if arr.ndim else None
    if dim is not None and width != dim:
        raise ValueError(f"{name} has {width} coordinates, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if arr.size and (arr.min() < -1e-12 or arr.max() > 1 + 1e-12):
        raise ValueError(f"{name} has coordinates outside [0, 1]")
    return arr


def check_consistent_length(*arrays) -> int:
    """Ensure all arguments share the same first-axis length; return it."""
    lengths = {len(a) for a in arrays}
    if len(lengths) > 1:
        raise ValueError(f"inconsistent lengths: {sorted(lengths)}")
    return lengths.pop() if lengths else 0


def check_rng(rng) -> np.random.Generator:
    """Accept a Generator or a seed and return a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
