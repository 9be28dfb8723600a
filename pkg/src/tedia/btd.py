"""Block-term decomposition refined by alternating least squares."""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .blocks import apply_block_permutation
from .tensor import multi_mode_product, unfold
from .validation import check_tensor


class RankDeficientWarning(UserWarning):
    pass


@dataclass
class BtdModel:
    """``sum_b cores[b] x1 factors[0][b] x2 factors[1][b] x3 factors[2][b]``."""

    cores: list
    factors: tuple

    def __post_init__(self):
        self.factors = tuple(list(f) for f in self.factors)
        if len(self.factors) != 3:
            raise ValueError("need factor blocks for exactly three modes")
        sizes = self.sizes
        for m, blocks in enumerate(self.factors):
            if len(blocks) != len(sizes):
                raise ValueError(f"mode {m + 1} has {len(blocks)} factor blocks, expected {len(sizes)}")
            for b, (f, s) in enumerate(zip(blocks, sizes)):
                if f.ndim != 2 or f.shape[1] != s:
                    raise ValueError(f"factor block {b} of mode {m + 1} has shape {f.shape}, expected (*, {s})")

    @property
    def sizes(self):
        return tuple(g.shape[0] for g in self.cores)

    @property
    def shape(self):
        return tuple(blocks[0].shape[0] for blocks in self.factors)

    def stacked(self, mode):
        """Column-concatenated factor blocks of ``mode`` (1-based)."""
        return np.hstack(self.factors[mode - 1])

    def term(self, b):
        return multi_mode_product(self.cores[b], *(blocks[b] for blocks in self.factors))

    def reconstruct(self):
        return sum(self.term(b) for b in range(len(self.cores)))

    def copy(self):
        return BtdModel([g.copy() for g in self.cores],
                        tuple([f.copy() for f in blocks] for blocks in self.factors))


@dataclass
class AlsResult:
    model: BtdModel
    fit_history: list = field(default_factory=list)
    n_iter: int = 0

    @property
    def fit(self):
        return self.fit_history[-1]


def from_tedia(r, b):
    """Partition a TEDIA solution by ``b``: diagonal core blocks, mixing column blocks."""
    core, tr = apply_block_permutation(r.core, r.transforms, b)
    cores, fac = [], ([], [], [])
    for s0, s in zip(b.starts, b.sizes):
        sl = slice(s0, s0 + s)
        cores.append(core[sl, sl, sl].copy())
        for m, M in enumerate(tr.mixing):
            fac[m].append(M[:, sl].copy())
    return BtdModel(cores, fac)


def _fit(t, norm_t, model):
    if norm_t == 0:
        return 0.0
    return float(np.linalg.norm(t - model.reconstruct()) / norm_t)


def _lstsq(a, rhs, what):
    x, _, rank, _ = np.linalg.lstsq(a, rhs, rcond=None)
    if rank < a.shape[1]:
        warnings.warn(f"rank-deficient least squares in {what}; using the minimum-norm solution",
                      RankDeficientWarning)
    return x


def _update_factor(t, model, mode):
    # rows of W: mode-unfolded terms without their mode factor
    rows = []
    for b, g in enumerate(model.cores):
        others = [blocks[b] for blocks in model.factors]
        others[mode] = None
        rows.append(unfold(multi_mode_product(g, *others), mode + 1))
    W = np.vstack(rows)
    F = _lstsq(W.T, unfold(t, mode + 1).T, f"factor update (mode {mode + 1})").T
    splits = np.cumsum(model.sizes)[:-1]
    model.factors[mode][:] = np.split(F, splits, axis=1)


def _update_cores(t, model):
    # joint least squares for all block cores through the normal equations
    starts = np.concatenate([[0], np.cumsum(model.sizes)])
    F = [model.stacked(m) for m in (1, 2, 3)]
    G = [f.conj().T @ f for f in F]
    rhs_full = multi_mode_product(t, *(f.conj().T for f in F))
    idx = []
    for b in range(len(model.cores)):
        r = np.arange(starts[b], starts[b + 1])
        idx.append(np.stack(np.meshgrid(r, r, r, indexing="ij"), -1).reshape(-1, 3))
    idx = np.vstack(idx)
    a, c, d = idx.T
    M = G[0][np.ix_(a, a)] * G[1][np.ix_(c, c)] * G[2][np.ix_(d, d)]
    rhs = rhs_full[a, c, d]
    try:
        x = np.linalg.solve(M, rhs)
        if not np.all(np.isfinite(x)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        x = _lstsq(M, rhs, "core update")
    pos = 0
    for b, s in enumerate(model.sizes):
        model.cores[b] = x[pos:pos + s**3].reshape(s, s, s)
        pos += s**3


def als_refine(t, init, max_iter=200, tol=1e-10):
    """Alternating least squares on the partitioned model.

    Each iteration solves for the stacked factor of each mode in turn, then
    for all block cores jointly; every sub-step is an exact least-squares
    solve, so the fit never increases beyond roundoff.  Stops when the
    relative fit improvement drops below ``tol``.

    Returns
    -------
    AlsResult
        ``n_iter`` counts iterations whose improvement reached ``tol``.
    """
    t = check_tensor(t)
    if init.shape != t.shape:
        raise ValueError(f"model shape {init.shape} does not match tensor shape {t.shape}")
    if max_iter < 0:
        raise ValueError("max_iter must be >= 0")
    model = init.copy()
    norm_t = np.linalg.norm(t)
    history = [_fit(t, norm_t, model)]
    n_eff = 0
    for _ in range(max_iter):
        for mode in range(3):
            _update_factor(t, model, mode)
        _update_cores(t, model)
        history.append(_fit(t, norm_t, model))
        gain = history[-2] - history[-1]
        if gain < tol * max(history[-2], np.finfo(float).tiny):
            break
        n_eff += 1
    return AlsResult(model=model, fit_history=history, n_iter=n_eff)


def random_btd_init(shape, sizes, rng):
    """Gaussian factors and cores, for restarts independent of TEDIA."""
    cores = [rng.standard_normal((s, s, s)) for s in sizes]
    fac = tuple([rng.standard_normal((n, s)) for s in sizes] for n in shape)
    return BtdModel(cores, fac)
