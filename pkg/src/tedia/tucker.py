"""Orthogonal Tucker compression to an ``n x n x n`` core by HOOI."""

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .tensor import multi_mode_product, unfold
from .validation import check_tensor


@dataclass
class TuckerResult:
    core: np.ndarray
    factors: tuple
    fit: float
    fit_history: list = field(default_factory=list)
    n_iter: int = 0

    def reconstruct(self):
        return multi_mode_product(self.core, *self.factors)


def _fix_signs(u):
    # largest-magnitude entry of each column made real positive
    idx = np.argmax(np.abs(u), axis=0)
    ph = u[idx, np.arange(u.shape[1])]
    ph = ph / np.where(np.abs(ph) == 0, 1, np.abs(ph))
    return u / ph


def _leading(mat, n):
    u = np.linalg.svd(mat, full_matrices=False)[0][:, :n]
    return _fix_signs(u)


def _fit(t, norm_t, core, Q):
    if norm_t == 0:
        return 0.0
    return float(np.linalg.norm(t - multi_mode_product(core, *Q)) / norm_t)


def hooi_compress(t, n, max_iter=50, tol=1e-10):
    """Rank-``(n, n, n)`` orthogonal Tucker approximation.

    Initialized by truncated HOSVD; each iteration refreshes one factor per
    mode as the ``n`` leading left singular vectors of the tensor projected
    on the other two factors.

    Returns
    -------
    TuckerResult
        ``fit = ||t - core x_1 Q1 x_2 Q2 x_3 Q3|| / ||t||`` (0 for a zero input).
    """
    t = check_tensor(t)
    if n < 1 or n > min(t.shape):
        raise ValueError(f"compression size {n} must lie in [1, {min(t.shape)}]")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    norm_t = np.linalg.norm(t)
    Q = [_leading(unfold(t, m), n) for m in (1, 2, 3)]
    core = multi_mode_product(t, *(q.conj().T for q in Q))
    history = [_fit(t, norm_t, core, Q)]
    it = 0
    for it in range(1, max_iter + 1):
        for m in range(3):
            proj = [None if k == m else Q[k].conj().T for k in range(3)]
            Q[m] = _leading(unfold(multi_mode_product(t, *proj), m + 1), n)
        core = multi_mode_product(t, *(q.conj().T for q in Q))
        history.append(_fit(t, norm_t, core, Q))
        if history[-2] - history[-1] < tol:
            break
    return TuckerResult(core=core, factors=tuple(Q), fit=history[-1],
                        fit_history=history, n_iter=it)


class TuckerCompressor(TransformerMixin, BaseEstimator):
    """Project tensors on the HOOI subspaces learned in :meth:`fit`."""

    def __init__(self, n_components=2, max_iter=50, tol=1e-10):
        self.n_components = n_components
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y=None):
        res = hooi_compress(X, self.n_components, self.max_iter, self.tol)
        self.factors_ = res.factors
        self.fit_ = res.fit
        self.n_iter_ = res.n_iter
        return self

    def transform(self, X):
        check_is_fitted(self, "factors_")
        return multi_mode_product(check_tensor(X), *(q.conj().T for q in self.factors_))

    def inverse_transform(self, core):
        check_is_fitted(self, "factors_")
        return multi_mode_product(core, *self.factors_)
