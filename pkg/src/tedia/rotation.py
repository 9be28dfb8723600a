"""Elementary determinant-1 rotations for a single index pair.

For a pair ``(i, j)`` the three mode factors differ from the identity only in
the ``2 x 2`` block on rows/columns ``(i, j)``.  ``theta`` has six entries,
two per mode; in mode ``m`` (1-based) ``theta[2m - 2]`` is the coefficient with
which slab ``j`` is added to slab ``i`` and ``theta[2m - 1]`` the coefficient
with which slab ``i`` is added to slab ``j``.  This is the ordering under
which the closed-form gradient and Gauss-Newton Hessian below hold.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .validation import check_pair, check_tensor


class RegularityError(ValueError):
    """Real-domain step with ``1 + theta_a theta_b < 0``; needs damping."""


class SingularStepError(np.linalg.LinAlgError):
    """``H + mu I`` is numerically singular; increase ``mu``."""


@dataclass(frozen=True)
class RotationParams:
    theta: np.ndarray
    i: int
    j: int

    def is_regular(self):
        if np.iscomplexobj(self.theta):
            return True
        return bool(_kernels.regular(np.asarray(self.theta, dtype=np.float64)))

    def matrices(self, n):
        """The three ``n x n`` mode factors, in the order they are applied."""
        return rotation_matrices(self.theta, self.i, self.j, n)


@dataclass(frozen=True)
class PairGradient:
    g: np.ndarray
    lambda_ij: complex
    mu_ij: complex
    nu_ij: complex


@dataclass(frozen=True)
class PairHessian:
    H: np.ndarray
    u_ij: np.ndarray
    v_ij: np.ndarray
    w_ij: np.ndarray


def elementary_rotation(theta_pair, i, j, n):
    """Identity with block ``[[s, tb], [ta, s]]`` at rows/cols ``(i, j)``.

    ``theta_pair = (ta, tb)`` and ``s = sqrt(1 + ta * tb)`` (principal branch
    for complex values), so the determinant is exactly one.

    Raises
    ------
    RegularityError
        Real ``theta_pair`` with ``1 + ta * tb < 0``.
    """
    check_pair(i, j, n)
    ta, tb = theta_pair
    arg = 1 + ta * tb
    cplx = np.iscomplexobj(np.asarray([ta, tb]))
    if not cplx and arg < 0:
        raise RegularityError(
            f"1 + theta_a*theta_b = {arg:.3g} < 0 on pair ({i}, {j}); needs damping"
        )
    s = np.sqrt(complex(arg)) if cplx else np.sqrt(arg)
    out = np.eye(n, dtype=np.complex128 if cplx else np.float64)
    out[i, i] = out[j, j] = s
    out[i, j] = tb
    out[j, i] = ta
    return out


def rotation_matrices(theta, i, j, n):
    theta = np.asarray(theta)
    return tuple(
        elementary_rotation((theta[2 * m + 1], theta[2 * m]), i, j, n)
        for m in range(3)
    )


def _workspace(e):
    return np.empty(6, dtype=e.dtype), np.empty((6, 6), dtype=e.dtype)


def pair_gradient(e, i, j):
    """Gradient of ``0.5 * ||off(E'(theta))||_F^2`` at ``theta = 0``, O(N^2)."""
    e = check_tensor(e, cubic=True, check_finite=False)
    check_pair(i, j, e.shape[0])
    g, H = _workspace(e)
    _kernels.pair_terms(e, i, j, g, H)
    lam = np.vdot(e[j].ravel(), e[i].ravel())
    mu = np.vdot(e[:, j, :].ravel(), e[:, i, :].ravel())
    nu = np.vdot(e[:, :, j].ravel(), e[:, :, i].ravel())
    return PairGradient(g=g, lambda_ij=lam, mu_ij=mu, nu_ij=nu)


def pair_hessian(e, i, j):
    """Gauss-Newton Hessian ``J^H J`` (6 x 6, Hermitian) at ``theta = 0``."""
    e = check_tensor(e, cubic=True, check_finite=False)
    check_pair(i, j, e.shape[0])
    g, H = _workspace(e)
    _kernels.pair_terms(e, i, j, g, H)
    return PairHessian(
        H=H, u_ij=e[i, j, :].copy(), v_ij=e[i, :, j].copy(), w_ij=e[:, i, j].copy()
    )


def solve_step(g, h, mu=0.0, i=0, j=1):
    """Plain (``mu = 0``) or damped Gauss-Newton step ``-(H + mu I)^-1 g``.

    ``g`` and ``h`` may be :class:`PairGradient`/:class:`PairHessian` or raw
    arrays.  Regularity of the returned step is the caller's concern.
    """
    g = getattr(g, "g", g)
    H = getattr(h, "H", h)
    M = np.asarray(H) + mu * np.eye(6)
    g = np.asarray(g)
    if not np.any(g):
        return RotationParams(np.zeros(6, dtype=np.result_type(g, M)), i, j)
    if np.linalg.cond(M) > 1e14:
        raise SingularStepError("H + mu*I is numerically singular; increase mu")
    return RotationParams(-np.linalg.solve(M, g), i, j)


def apply_rotation(e, p):
    """``E x_1 A_ij x_2 B_ij x_3 C_ij`` via in-place two-slab updates, O(N^2)."""
    e = check_tensor(e, cubic=True)
    check_pair(p.i, p.j, e.shape[0])
    if not p.is_regular():
        raise RegularityError(f"step on pair ({p.i}, {p.j}) violates 1 + ta*tb >= 0")
    theta = np.asarray(p.theta, dtype=np.result_type(p.theta, e))
    out = e.astype(theta.dtype, copy=True)
    _kernels.rotate_inplace(out, p.i, p.j, theta)
    return out
