"""First-order perturbation analysis of a real TEDIA solution.

Parameter vector ``Theta`` stacks the demixing entries ``A_m[p, r]``
(``m = 0, 1, 2`` for ``A, B, C``) at flat index ``(p * N + r) * 3 + m``.
Condition rows use the same layout: row ``(i * N + j) * 3 + m`` holds the
mode-``m`` block revealing sum of slabs ``i`` and ``j`` when ``i != j`` and
the scale-fixing condition ``(dA_m A~_m)_{ii} = 0`` when ``i == j``.
``H2`` columns follow the C-order flattening of the input tensor.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .sweep import brc_residuals
from .tensor import multi_mode_product
from .validation import check_tensor

STABLE_RATIO = 1e-10
COND_LIMIT = 1e12
STATIONARY_TOL = 1e-4


class NonStationaryWarning(UserWarning):
    pass


class UnstableSolutionError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class AuxTensors:
    """``Ta = T x2 B x3 C`` etc. and ``Ea = E x2 B^T x3 C^T`` etc."""

    Ta: np.ndarray
    Tb: np.ndarray
    Tc: np.ndarray
    Ea: np.ndarray
    Eb: np.ndarray
    Ec: np.ndarray
    E: np.ndarray

    @classmethod
    def build(cls, t, tr):
        A, B, C = tr.demixing
        E = multi_mode_product(t, A, B, C)
        return cls(
            Ta=multi_mode_product(t, None, B, C),
            Tb=multi_mode_product(t, A, None, C),
            Tc=multi_mode_product(t, A, B, None),
            Ea=multi_mode_product(E, None, B.T, C.T),
            Eb=multi_mode_product(E, A.T, None, C.T),
            Ec=multi_mode_product(E, A.T, B.T, None),
            E=E,
        )


@dataclass
class PerturbationReport:
    H1: np.ndarray
    H2: np.ndarray
    cov: np.ndarray | None
    msae: np.ndarray | None
    sigma2: float
    stable: bool
    h1_min_singular_ratio: float
    stationary: bool = True

    def summary(self):
        """Plain-text report: stability, singular-value ratio, msae in dB."""
        lines = [
            f"stable: {self.stable}",
            f"h1_min_singular_ratio: {self.h1_min_singular_ratio:.6e}",
            f"stationary: {self.stationary}",
            f"sigma2: {self.sigma2:.6e}",
        ]
        if self.msae is not None:
            with np.errstate(divide="ignore"):
                db = 10 * np.log10(self.msae)
            for m, name in enumerate("ABC"):
                lines.append(f"msae_db_{name}: " + " ".join(f"{v:.4f}" for v in db[m]))
        return "\n".join(lines) + "\n"


def _prepare(t, tr):
    t = check_tensor(t, cubic=True)
    if np.iscomplexobj(t) or any(np.iscomplexobj(m) for m in tr.demixing):
        raise TypeError("perturbation analysis covers the real domain only")
    return t


def _stationarity(E):
    scale = np.linalg.norm(E) ** 2
    if E.shape[0] < 2 or scale == 0:
        return True
    ok = np.max(np.abs(brc_residuals(E))) <= STATIONARY_TOL * scale
    if not ok:
        warnings.warn(
            "input is not block-revealing stationary; first-order analysis is unreliable",
            NonStationaryWarning,
        )
    return bool(ok)


# axis order placing row mode m first, remaining modes in natural order
_ORDERS = ((0, 1, 2), (1, 0, 2), (2, 0, 1))


def assemble_h1(t, tr):
    """Jacobian of the condition stack with respect to ``Theta``.

    For row mode ``m`` all tensors are viewed with mode ``m`` leading, so one
    set of closed forms covers the column blocks where the perturbed mode is
    the row mode (leading axis) or one of the two trailing axes.  The sum
    over the trailing indices always skips the ``(i, i)`` entry.
    """
    t = _prepare(t, tr)
    n = t.shape[0]
    aux = AuxTensors.build(t, tr)
    T = (aux.Ta, aux.Tb, aux.Tc)
    H = np.zeros((n, n, 3, n, n, 3))
    for m, order in enumerate(_ORDERS):
        x = aux.E.transpose(order)
        for mc in range(3):
            y = T[mc].transpose(order)
            pos = order.index(mc)
            # P[r, s] = sum over trailing indices of y[r] * x[s]
            P = y.reshape(n, -1) @ x.reshape(n, -1).T
            for i in range(n):
                for j in range(n):
                    if i == j:
                        continue
                    blk = H[i, j, m, :, :, mc]
                    if pos == 0:
                        # y[r, u, v]: row slab replaced by slab r of y
                        blk[i] += P[:, j] - y[:, i, i] * x[j, i, i]
                        blk[j] += P[:, i] - y[:, i, i] * x[i, i, i]
                    elif pos == 1:
                        # dx[a, p, v] = y[a, r, v]
                        blk += x[j] @ y[i].T + x[i] @ y[j].T
                        blk[i] -= y[i, :, i] * x[j, i, i] + y[j, :, i] * x[i, i, i]
                    else:
                        # dx[a, u, p] = y[a, u, r]
                        blk += x[j].T @ y[i] + x[i].T @ y[j]
                        blk[i] -= y[i, i, :] * x[j, i, i] + y[j, i, :] * x[i, i, i]
    for m, Mt in enumerate(tr.mixing):
        for i in range(n):
            H[i, i, m, i, :, m] = Mt[:, i]
    return H.reshape(3 * n * n, 3 * n * n)


def assemble_h2(t, tr):
    """Jacobian of the condition stack with respect to the entries of ``t``."""
    t = _prepare(t, tr)
    n = t.shape[0]
    aux = AuxTensors.build(t, tr)
    A, B, C = tr.demixing
    E = aux.E
    H = np.zeros((n, n, 3, n, n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            bc = np.outer(B[i], C[i])
            ac = np.outer(A[i], C[i])
            ab = np.outer(A[i], B[i])
            H[i, j, 0] = (
                A[i][:, None, None] * (aux.Ea[j] - bc * E[j, i, i])[None]
                + A[j][:, None, None] * (aux.Ea[i] - bc * E[i, i, i])[None]
            )
            H[i, j, 1] = (
                B[i][None, :, None] * (aux.Eb[:, j, :] - ac * E[i, j, i])[:, None, :]
                + B[j][None, :, None] * (aux.Eb[:, i, :] - ac * E[i, i, i])[:, None, :]
            )
            H[i, j, 2] = (
                C[i][None, None, :] * (aux.Ec[:, :, j] - ab * E[i, i, j])[:, :, None]
                + C[j][None, None, :] * (aux.Ec[:, :, i] - ab * E[i, i, i])[:, :, None]
            )
    return H.reshape(3 * n * n, n**3)


def condition_stack(t, tr, theta_delta=None):
    """Stacked conditions at ``tr`` (optionally with ``Theta`` perturbed).

    The reference point enters the scale rows through its mixing matrices,
    so those rows are linear in the perturbation by construction.
    """
    t = check_tensor(t, cubic=True)
    n = t.shape[0]
    dem = [m.copy() for m in tr.demixing]
    d = np.zeros((n, n, 3)) if theta_delta is None else np.asarray(theta_delta).reshape(n, n, 3)
    for m in range(3):
        dem[m] = dem[m] + d[:, :, m]
    E = multi_mode_product(t, *dem)
    out = np.zeros((n, n, 3))
    R = brc_residuals(E)
    for m in range(3):
        out[:, :, m] = R[m]
        out[np.arange(n), np.arange(n), m] = np.diag(d[:, :, m] @ tr.mixing[m])
    return out.ravel()


def stability_check(t, tr, h1=None):
    """Whether ``H1`` is regular; returns ``(stable, smallest/largest singular value)``."""
    h1 = assemble_h1(t, tr) if h1 is None else h1
    s = np.linalg.svd(h1, compute_uv=False)
    ratio = float(s[-1] / s[0]) if s[0] > 0 else 0.0
    return ratio > STABLE_RATIO, ratio


def covariance(h1, h2, sigma2):
    """``sigma2 * H1^-1 H2 H2^T H1^-T``, symmetrized."""
    h1 = np.asarray(h1, dtype=float)
    h2 = np.asarray(h2, dtype=float)
    if sigma2 == 0:
        return np.zeros((h1.shape[0], h1.shape[0]))
    if np.linalg.cond(h1) >= COND_LIMIT:
        raise UnstableSolutionError("H1 is singular: the solution is not stable")
    X = np.linalg.solve(h1, h2)
    cov = sigma2 * (X @ X.T)
    return 0.5 * (cov + cov.T)


def predict_msae(cov, tr):
    """Predicted mean-square angular error of each mixing column, shape ``(3, N)``.

    Uses ``dA~ = -A~ dA A~``: column ``i`` of ``dA~`` is ``L_i vec(dA)`` with
    ``L_i[q, (p, r)] = -A~[q, p] A~[r, i]``.
    """
    mix = tr.mixing
    n = mix[0].shape[0]
    out = np.zeros((3, n))
    if cov is None:
        return None
    for m, Mt in enumerate(mix):
        idx = np.arange(n * n) * 3 + m
        cA = cov[np.ix_(idx, idx)]
        for i in range(n):
            a = Mt[:, i]
            L = -np.einsum("qp,r->qpr", Mt, a).reshape(n, n * n)
            ci = L @ cA @ L.T
            na2 = a @ a
            Pi = np.eye(n) - np.outer(a, a) / na2
            out[m, i] = max(np.trace(Pi @ ci) / na2, 0.0)
    return out


def analyze(t, tr, sigma2):
    """Full report; ``cov`` and ``msae`` are ``None`` when unstable."""
    t = _prepare(t, tr)
    stationary = _stationarity(tr.demix(t))
    h1 = assemble_h1(t, tr)
    h2 = assemble_h2(t, tr)
    stable, ratio = stability_check(t, tr, h1)
    cov = msae = None
    if stable:
        try:
            cov = covariance(h1, h2, sigma2)
            msae = predict_msae(cov, tr)
        except UnstableSolutionError:
            stable = False
    return PerturbationReport(H1=h1, H2=h2, cov=cov, msae=msae, sigma2=float(sigma2),
                              stable=stable, h1_min_singular_ratio=ratio,
                              stationary=stationary)
