"""Diagonal determinant-1 scaling of a core tensor.

Scaling is a diagnostic here; it never changes the support of a tensor and
is not interleaved with the rotation sweeps.
"""

from dataclasses import dataclass

import numpy as np

from .validation import check_mode, check_tensor

ZERO_RATIO = 1e-14


@dataclass(frozen=True)
class SliceEnergies:
    mode: int
    eta: np.ndarray


@dataclass(frozen=True)
class InfimumZero:
    """Some slice energies vanish while others do not: no minimizer exists.

    ``zero`` marks the vanishing slices; scaling them up without bound drives
    the off-diagonal energy to zero.
    """

    zero: np.ndarray


def slice_energies(e, mode=1):
    """Off-diagonal energy ``eta_i`` of each mode-``mode`` slice."""
    e = check_tensor(e, cubic=True)
    ax = check_mode(mode)
    x = np.moveaxis(np.abs(e) ** 2, ax, 0)
    n = e.shape[0]
    idx = np.arange(n)
    eta = x.reshape(n, -1).sum(axis=1) - x[idx, idx, idx]
    return SliceEnergies(mode=mode, eta=np.maximum(eta, 0.0))


def optimal_scaling(eta):
    """Determinant-1 diagonal minimizing ``sum_i d_i^2 eta_i``.

    Returns
    -------
    ndarray or InfimumZero
        ``d`` with ``d_i^2 = (prod_j eta_j)^(1/N) / eta_i``; all ones when
        every ``eta_i`` vanishes.
    """
    eta = np.asarray(getattr(eta, "eta", eta), dtype=float)
    top = eta.max() if eta.size else 0.0
    if top <= 0:
        return np.ones_like(eta)
    zero = eta <= ZERO_RATIO * top
    if zero.any():
        return InfimumZero(zero=zero)
    log_eta = np.log(eta)
    return np.exp(0.5 * (log_eta.mean() - log_eta))


def apply_scaling(e, d, mode=1):
    e = check_tensor(e, cubic=True)
    shape = [1, 1, 1]
    shape[check_mode(mode)] = -1
    return e * np.asarray(d).reshape(shape)


def scaling_optimality_residual(e):
    """Largest relative gap between slice energies, over all three modes.

    Zero exactly when the ``3N - 3`` scaling-optimality equalities hold.
    """
    worst = 0.0
    for mode in (1, 2, 3):
        eta = slice_energies(e, mode).eta
        gap = np.max(np.abs(eta[1:] - eta[0])) if eta.size > 1 else 0.0
        worst = max(worst, gap / (eta.max() + 1e-300))
    return float(worst)
