"""Cyclic sweeps of elementary rotations until the block revealing condition."""

import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import ConvergenceWarning
from sklearn.utils.validation import check_is_fitted

from . import _kernels
from .tensor import multi_mode_product, off_norm
from .validation import check_matrix, check_tensor


class NonFiniteError(FloatingPointError):
    pass


@dataclass(frozen=True)
class TediaConfig:
    """Run parameters.

    ``init`` holds optional starting demixing matrices ``(A, B, C)``; each is
    rescaled to ``|det| = 1`` (a negative determinant flips the first row).
    ``extra_steps`` adds up to that many further Gauss-Newton steps on the
    same pair while the cost keeps decreasing.
    """

    epsilon: float = 1e-6
    max_sweeps: int = 1000
    mu_growth: float = 2.0
    init: tuple | None = None
    extra_steps: int = 0
    record_steps: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_sweeps < 1:
            raise ValueError(f"max_sweeps must be >= 1, got {self.max_sweeps}")
        if not self.mu_growth > 1:
            raise ValueError(f"mu_growth must exceed 1, got {self.mu_growth}")
        if self.extra_steps < 0:
            raise ValueError("extra_steps must be >= 0")


@dataclass
class TransformSet:
    """Demixing matrices ``A, B, C`` and their inverses (mixing)."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    A_tilde: np.ndarray
    B_tilde: np.ndarray
    C_tilde: np.ndarray

    @classmethod
    def identity(cls, n, dtype=np.float64):
        return cls(*(np.eye(n, dtype=dtype) for _ in range(6)))

    @classmethod
    def from_demixing(cls, A, B, C):
        A, B, C = (check_matrix(m, square=True) for m in (A, B, C))
        return cls(A, B, C, np.linalg.inv(A), np.linalg.inv(B), np.linalg.inv(C))

    @classmethod
    def from_mixing(cls, At, Bt, Ct):
        At, Bt, Ct = (check_matrix(m, square=True) for m in (At, Bt, Ct))
        return cls(np.linalg.inv(At), np.linalg.inv(Bt), np.linalg.inv(Ct), At, Bt, Ct)

    @property
    def demixing(self):
        return self.A, self.B, self.C

    @property
    def mixing(self):
        return self.A_tilde, self.B_tilde, self.C_tilde

    def demix(self, t):
        return multi_mode_product(t, self.A, self.B, self.C)

    def reconstruct(self, core):
        return multi_mode_product(core, self.A_tilde, self.B_tilde, self.C_tilde)

    def permuted(self, perm):
        """Rows of the demixing and columns of the mixing reordered by ``perm``."""
        p = np.asarray(perm)
        return TransformSet(
            self.A[p], self.B[p], self.C[p],
            self.A_tilde[:, p], self.B_tilde[:, p], self.C_tilde[:, p],
        )

    def copy(self):
        return TransformSet(*(m.copy() for m in (*self.demixing, *self.mixing)))


@dataclass
class DiagonalizationResult:
    core: np.ndarray
    transforms: TransformSet
    sweeps_run: int
    theta_max_history: list
    off_norm_history: list
    converged: bool
    step_off_history: list = field(default_factory=list)
    sweep_seconds: list = field(default_factory=list)
    n_damped: int = 0
    n_skipped: int = 0


def _unit_det(m):
    m = np.array(m, dtype=np.result_type(m, np.float64), copy=True)
    n = m.shape[0]
    det = np.linalg.det(m)
    if det == 0:
        raise ValueError("initial transform is singular")
    m /= np.abs(det) ** (1.0 / n)
    if np.isrealobj(m) and det < 0:
        m[0] = -m[0]
    elif np.iscomplexobj(m):
        m[0] /= det / abs(det)
    return m


def tedia(t, cfg=None, **overrides):
    """Non-orthogonal three-sided diagonalization of a cubic tensor.

    Sweeps over all pairs ``i < j`` in lexicographic order, one Gauss-Newton
    step per pair with damping whenever the plain step would raise
    ``||off(E)||_F``, be singular, or (real data) break
    ``1 + theta_a theta_b >= 0``.  Stops when the largest step norm in a
    sweep drops below ``cfg.epsilon``.

    Parameters
    ----------
    t : ndarray, shape (N, N, N)
        Real or complex input.
    cfg : TediaConfig, optional
    **overrides
        Field overrides applied on top of ``cfg``.

    Returns
    -------
    DiagonalizationResult
        ``t == reconstruct(core)`` up to roundoff at every stage.
    """
    cfg = replace(cfg or TediaConfig(), **overrides)
    t = check_tensor(t, cubic=True)
    n = t.shape[0]
    dtype = t.dtype
    if cfg.init is None:
        tr = TransformSet.identity(n, dtype)
        core = t.copy()
    else:
        init = cfg.init.demixing if isinstance(cfg.init, TransformSet) else cfg.init
        mats = [_unit_det(check_matrix(m, square=True)) for m in init]
        dtype = np.result_type(dtype, *mats)
        mats = [np.ascontiguousarray(m, dtype=dtype) for m in mats]
        tr = TransformSet.from_demixing(*mats)
        core = np.ascontiguousarray(tr.demix(t), dtype=dtype)
    for name in ("A", "B", "C", "A_tilde", "B_tilde", "C_tilde"):
        setattr(tr, name, np.ascontiguousarray(getattr(tr, name), dtype=dtype))

    is_real = not np.iscomplexobj(core)
    npairs = n * (n - 1) // 2
    step_buf = np.zeros(max(npairs, 1))
    res = DiagonalizationResult(
        core=core, transforms=tr, sweeps_run=0, theta_max_history=[],
        off_norm_history=[off_norm(core)], converged=False,
    )
    if n == 1:
        res.sweeps_run = 1
        res.theta_max_history.append(0.0)
        res.off_norm_history.append(0.0)
        res.converged = True
        return res

    for sweep in range(cfg.max_sweeps):
        tic = time.perf_counter()
        status, theta_max, off2, n_damped, n_skipped, bi, bj = _kernels.sweep(
            core, tr.A_tilde, tr.B_tilde, tr.C_tilde, tr.A, tr.B, tr.C,
            is_real, float(cfg.mu_growth), int(cfg.extra_steps), step_buf,
        )
        res.sweep_seconds.append(time.perf_counter() - tic)
        res.sweeps_run = sweep + 1
        res.n_damped += n_damped
        res.n_skipped += n_skipped
        if status == _kernels.NONFINITE or not np.isfinite(off2):
            raise NonFiniteError(
                f"non-finite values produced in sweep {sweep + 1} at pair ({bi}, {bj})"
            )
        res.theta_max_history.append(float(theta_max))
        res.off_norm_history.append(float(np.sqrt(max(off2, 0.0))))
        if cfg.record_steps:
            res.step_off_history.extend(np.sqrt(np.maximum(step_buf[:npairs], 0.0)))
        if theta_max < cfg.epsilon:
            res.converged = True
            break
    if not all(np.all(np.isfinite(m)) for m in (*tr.demixing, *tr.mixing)):
        raise NonFiniteError("non-finite transform entries after diagonalization")
    return res


def brc_residuals(e):
    """Array ``R[m, i, j]`` of block-revealing sums (zero where ``i == j``)."""
    e = check_tensor(e, cubic=True)
    n = e.shape[0]
    idx = np.arange(n)
    out = np.zeros((3, n, n), dtype=e.dtype)
    for m in range(3):
        x = np.moveaxis(e, m, 0)
        flat = x.reshape(n, -1)
        G = flat @ flat.conj().T
        # drop (k, l) = (i, i) from the sum of slab i against slab j
        G -= x[idx, idx, idx][:, None] * np.conj(x[:, idx, idx].T)
        G[idx, idx] = 0
        out[m] = G
    return out


def check_brc(e, tol):
    """Whether ``e`` satisfies the block revealing condition.

    Holds when every sum is below ``tol * ||off(e)||_F^2`` (``tol * N^3`` if
    ``off(e) = 0``).

    Returns
    -------
    ok : bool
    worst : float
        Largest magnitude over the ``3N(N-1)`` sums.
    """
    e = check_tensor(e, cubic=True)
    worst = float(np.max(np.abs(brc_residuals(e)))) if e.shape[0] > 1 else 0.0
    off2 = off_norm(e) ** 2
    bound = tol * off2 if off2 > 0 else tol * e.shape[0] ** 3
    return worst < bound, worst


def residual_fit(t, r):
    """``||t - core x_1 A~ x_2 B~ x_3 C~||_F / ||t||_F``."""
    t = np.asarray(t)
    nt = np.linalg.norm(t)
    if nt == 0:
        return 0.0
    return float(np.linalg.norm(t - r.transforms.reconstruct(r.core)) / nt)


class TEDIA(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`tedia`.

    Parameters
    ----------
    epsilon : float, default=1e-6
        Stop once every elementary step in a sweep has norm below this.
    max_sweeps : int, default=1000
    mu_growth : float, default=2.0
        Damping multiplier.
    extra_steps : int, default=0

    Attributes
    ----------
    core_ : ndarray
    transforms_ : TransformSet
    mixing_ : tuple of ndarray
        Columns are the estimated factors, ``X ~= core_ x_1 A~ x_2 B~ x_3 C~``.
    n_sweeps_ : int
    converged_ : bool
    """

    def __init__(self, epsilon=1e-6, max_sweeps=1000, mu_growth=2.0, extra_steps=0):
        self.epsilon = epsilon
        self.max_sweeps = max_sweeps
        self.mu_growth = mu_growth
        self.extra_steps = extra_steps

    def fit(self, X, y=None, init=None):
        cfg = TediaConfig(
            epsilon=self.epsilon, max_sweeps=self.max_sweeps,
            mu_growth=self.mu_growth, extra_steps=self.extra_steps, init=init,
        )
        res = tedia(X, cfg)
        if not res.converged:
            warnings.warn(
                f"TEDIA did not converge in {res.sweeps_run} sweeps "
                f"(last theta_max={res.theta_max_history[-1]:.3g})",
                ConvergenceWarning,
            )
        self.result_ = res
        self.core_ = res.core
        self.transforms_ = res.transforms
        self.mixing_ = res.transforms.mixing
        self.demixing_ = res.transforms.demixing
        self.n_sweeps_ = res.sweeps_run
        self.converged_ = res.converged
        return self

    def transform(self, X):
        check_is_fitted(self, "transforms_")
        return self.transforms_.demix(check_tensor(X, cubic=True))

    def inverse_transform(self, E):
        check_is_fitted(self, "transforms_")
        return self.transforms_.reconstruct(check_tensor(E, cubic=True))
