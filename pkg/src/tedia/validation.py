"""Input validation helpers shared by the estimators and functional API."""

import numpy as np


def check_tensor(t, *, cubic=False, name="tensor", check_finite=True):
    """Validate an order-3 tensor and return it as a float64/complex128 array.

    Parameters
    ----------
    t : array_like
        Candidate tensor.
    cubic : bool
        Require ``N x N x N`` shape.
    name : str
        Used in error messages.
    check_finite : bool
        Scan for NaN/Inf (an O(size) pass; the per-pair kernels skip it).

    Returns
    -------
    ndarray
        C-contiguous array of dtype float64 or complex128.
    """
    arr = np.asarray(t)
    if arr.ndim != 3:
        raise ValueError(f"{name} must be an order-3 array, got ndim={arr.ndim}")
    if min(arr.shape) < 1:
        raise ValueError(f"{name} has an empty dimension: shape={arr.shape}")
    if np.iscomplexobj(arr):
        arr = np.ascontiguousarray(arr, dtype=np.complex128)
    else:
        arr = np.ascontiguousarray(arr, dtype=np.float64)
    if check_finite and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    if cubic and not (arr.shape[0] == arr.shape[1] == arr.shape[2]):
        raise ValueError(f"{name} must be cubic, got shape={arr.shape}")
    return arr


def check_matrix(m, *, square=False, name="matrix"):
    arr = np.asarray(m)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got ndim={arr.ndim}")
    dtype = np.complex128 if np.iscomplexobj(arr) else np.float64
    arr = np.ascontiguousarray(arr, dtype=dtype)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    if square and arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be square, got shape={arr.shape}")
    return arr


def check_mode(mode):
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode!r}")
    return mode - 1


def check_pair(i, j, n):
    if i == j:
        raise ValueError(f"pair indices must differ, got i=j={i}")
    for idx in (i, j):
        if not 0 <= idx < n:
            raise IndexError(f"index {idx} out of range for dimension {n}")


def check_random_state(seed):
    """Turn ``seed`` into a :class:`numpy.random.Generator`."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
