"""Dense order-3 tensor primitives.

Tensors are plain ``numpy`` arrays of shape ``(N1, N2, N3)`` in C order, so
the linear index of entry ``(i, j, k)`` is ``(i * N2 + j) * N3 + k``.  Mode
numbers follow the usual tensor convention (1, 2, 3); element indices are
zero-based.
"""

import numpy as np

from .validation import check_mode, check_tensor


def mode_product(t, m, mode):
    """Mode-``mode`` tensor-matrix product ``t x_mode m``.

    Each mode-``mode`` fiber ``x`` of ``t`` is replaced by ``m @ x``.

    Parameters
    ----------
    t : ndarray, shape (N1, N2, N3)
    m : ndarray, shape (R, N_mode)
    mode : {1, 2, 3}

    Returns
    -------
    ndarray
        Tensor whose ``mode`` dimension is ``R``.
    """
    t = np.asarray(t)
    m = np.asarray(m)
    ax = check_mode(mode)
    if m.ndim != 2 or m.shape[1] != t.shape[ax]:
        raise ValueError(
            f"mode-{mode} product: matrix has {m.shape[-1] if m.ndim else 0} "
            f"columns but tensor has size {t.shape[ax]} along mode {mode}"
        )
    out = np.tensordot(m, t, axes=([1], [ax]))
    return np.ascontiguousarray(np.moveaxis(out, 0, ax))


def multi_mode_product(t, a=None, b=None, c=None):
    """``t x_1 a x_2 b x_3 c``; ``None`` skips a mode."""
    for mode, m in ((1, a), (2, b), (3, c)):
        if m is not None:
            t = mode_product(t, m, mode)
    return t


def unfold(t, mode):
    """Mode-``mode`` matricization with remaining indices in C order."""
    ax = check_mode(mode)
    return np.moveaxis(np.asarray(t), ax, 0).reshape(t.shape[ax], -1)


def fold(mat, mode, shape):
    ax = check_mode(mode)
    full = [shape[ax]] + [s for k, s in enumerate(shape) if k != ax]
    return np.moveaxis(np.asarray(mat).reshape(full), 0, ax)


def off(t):
    """Copy of a cubic tensor with the spatial diagonal ``t[i, i, i]`` zeroed."""
    t = check_tensor(t, cubic=True)
    out = t.copy()
    idx = np.arange(t.shape[0])
    out[idx, idx, idx] = 0
    return out


def frobenius_norm(t):
    return float(np.sqrt(np.sum(np.abs(np.asarray(t)) ** 2)))


def off_norm(t):
    """``||off(t)||_F`` without materializing the copy."""
    t = np.asarray(t)
    idx = np.arange(t.shape[0])
    total = np.sum(np.abs(t) ** 2) - np.sum(np.abs(t[idx, idx, idx]) ** 2)
    return float(np.sqrt(max(total, 0.0)))


def slice_vecs(t, mode, index):
    """Vectorized mode-``mode`` slice ``index``, remaining indices in C order.

    Inner products of two slices taken with this function are well defined,
    e.g. ``np.vdot(slice_vecs(e, 1, j), slice_vecs(e, 1, i))`` is the
    conjugate-first product used by the rotation gradient.
    """
    t = check_tensor(t, cubic=True)
    ax = check_mode(mode)
    n = t.shape[0]
    if not 0 <= index < n:
        raise IndexError(f"slice index {index} out of range for N={n}")
    return np.take(t, index, axis=ax).ravel()


def diagonal_tensor(values, dtype=None):
    """Spatially diagonal cubic tensor with ``values`` on its diagonal."""
    values = np.asarray(values, dtype=dtype)
    n = values.shape[0]
    out = np.zeros((n, n, n), dtype=values.dtype if dtype is None else dtype)
    idx = np.arange(n)
    out[idx, idx, idx] = values
    return out


def e01_tensor():
    """The 2x2x2 stationary but non-diagonal tensor with slices I and J.

    ``e[0] = [[1, 0], [0, 1]]`` and ``e[1] = [[0, 1], [1, 0]]``.  Every
    elementary rotation gradient vanishes here although the tensor has an
    exact diagonalization.
    """
    e = np.zeros((2, 2, 2))
    e[0] = [[1.0, 0.0], [0.0, 1.0]]
    e[1] = [[0.0, 1.0], [1.0, 0.0]]
    return e
