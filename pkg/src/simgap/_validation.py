"""Small input-validation helpers shared across the package."""

import numpy as np


def check_finite_array(x, name, ndim=None, dtype=float):
    """Convert ``x`` to an ndarray and reject NaN/inf or a wrong rank."""
    arr = np.asarray(x, dtype=dtype)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_vector3(x, name):
    arr = check_finite_array(x, name)
    if arr.shape[-1] != 3:
        raise ValueError(f"{name} must have 3 components, got shape {arr.shape}")
    return arr


def check_per_axis(x, name, nonnegative=False):
    """Broadcast a scalar or 3-sequence to a length-3 float vector."""
    arr = np.broadcast_to(np.asarray(x, dtype=float), (3,)).copy()
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if nonnegative and np.any(arr < 0):
        raise ValueError(f"{name} must be >= 0, got {arr.tolist()}")
    return arr


def check_positive(x, name, strict=True):
    x = float(x)
    if not np.isfinite(x) or (x <= 0 if strict else x < 0):
        op = ">" if strict else ">="
        raise ValueError(f"{name} must be {op} 0, got {x}")
    return x


def check_strictly_increasing(t, name="timestamps"):
    t = np.asarray(t, dtype=float)
    if t.size > 1:
        d = np.diff(t)
        bad = np.flatnonzero(~(d > 0))
        if bad.size:
            i = int(bad[0]) + 1
            raise ValueError(f"{name} must be strictly increasing (index {i}: {t[i - 1]} -> {t[i]})")
    return t
