"""Compiled inner loops of the elementary-rotation sweep.

Everything here works in place on C-contiguous float64 or complex128 arrays
and costs O(N^2) per pair.  Parameter layout for the pair ``(i, j)``: in mode
``m`` (0-based), ``theta[2m]`` adds slab ``j`` into slab ``i`` and
``theta[2m + 1]`` adds slab ``i`` into slab ``j``.
"""

import numba as nb
import numpy as np

_JIT = dict(cache=True, nogil=True)

ACCEPTED = 0
SKIPPED = 1
NONFINITE = 2


@nb.njit(**_JIT)
def _abs2(x):
    return (x.real * x.real) + (x.imag * x.imag)


@nb.njit(**_JIT)
def pair_terms(E, i, j, g, H):
    """Fill gradient ``g`` (6,) and Gauss-Newton Hessian ``H`` (6, 6)."""
    n = E.shape[0]
    zero = E[0, 0, 0] * 0
    lam_ij = zero
    mu_ij = zero
    nu_ij = zero
    lam_ii = 0.0
    lam_jj = 0.0
    mu_ii = 0.0
    mu_jj = 0.0
    nu_ii = 0.0
    nu_jj = 0.0
    for a in range(n):
        for b in range(n):
            x = E[i, a, b]
            y = E[j, a, b]
            lam_ij += np.conj(y) * x
            lam_ii += _abs2(x)
            lam_jj += _abs2(y)
            x = E[a, i, b]
            y = E[a, j, b]
            mu_ij += np.conj(y) * x
            mu_ii += _abs2(x)
            mu_jj += _abs2(y)
            x = E[a, b, i]
            y = E[a, b, j]
            nu_ij += np.conj(y) * x
            nu_ii += _abs2(x)
            nu_jj += _abs2(y)

    # fiber products; the transposed ones are their conjugates
    uji_uij = zero
    ujj_uii = zero
    vji_vij = zero
    vjj_vii = zero
    wji_wij = zero
    wjj_wii = zero
    for k in range(n):
        uji_uij += np.conj(E[j, i, k]) * E[i, j, k]
        ujj_uii += np.conj(E[j, j, k]) * E[i, i, k]
        vji_vij += np.conj(E[j, k, i]) * E[i, k, j]
        vjj_vii += np.conj(E[j, k, j]) * E[i, k, i]
        wji_wij += np.conj(E[k, j, i]) * E[k, i, j]
        wjj_wii += np.conj(E[k, j, j]) * E[k, i, i]

    eiii = E[i, i, i]
    ejjj = E[j, j, j]
    ejii = E[j, i, i]
    eijj = E[i, j, j]
    eiji = E[i, j, i]
    ejij = E[j, i, j]
    eiij = E[i, i, j]
    ejji = E[j, j, i]

    g[0] = lam_ij - np.conj(ejii) * eiii
    g[1] = np.conj(lam_ij) - np.conj(eijj) * ejjj
    g[2] = mu_ij - np.conj(eiji) * eiii
    g[3] = np.conj(mu_ij) - np.conj(ejij) * ejjj
    g[4] = nu_ij - np.conj(eiij) * eiii
    g[5] = np.conj(nu_ij) - np.conj(ejji) * ejjj

    H[0, 0] = lam_jj - _abs2(ejii)
    H[1, 1] = lam_ii - _abs2(eijj)
    H[2, 2] = mu_jj - _abs2(eiji)
    H[3, 3] = mu_ii - _abs2(ejij)
    H[4, 4] = nu_jj - _abs2(eiij)
    H[5, 5] = nu_ii - _abs2(ejji)
    H[0, 1] = zero
    H[2, 3] = zero
    H[4, 5] = zero
    H[0, 2] = uji_uij - np.conj(ejii) * eiji
    H[0, 3] = ujj_uii
    H[0, 4] = vji_vij - np.conj(ejii) * eiij
    H[0, 5] = vjj_vii
    H[1, 2] = np.conj(ujj_uii)
    H[1, 3] = np.conj(uji_uij) - np.conj(eijj) * ejij
    H[1, 4] = np.conj(vjj_vii)
    H[1, 5] = np.conj(vji_vij) - np.conj(eijj) * ejji
    H[2, 4] = wji_wij - np.conj(eiji) * eiij
    H[2, 5] = wjj_wii
    H[3, 4] = np.conj(wjj_wii)
    H[3, 5] = np.conj(wji_wij) - np.conj(ejij) * ejji
    for r in range(6):
        for c in range(r):
            H[r, c] = np.conj(H[c, r])


@nb.njit(**_JIT)
def affected_off2(E, i, j):
    """Off-diagonal energy of all entries having an index in ``{i, j}``."""
    n = E.shape[0]
    s = 0.0
    for a in (i, j):
        for l in range(n):
            for m in range(n):
                if not (l == a and m == a):
                    s += _abs2(E[a, l, m])
    for k in range(n):
        if k == i or k == j:
            continue
        for m in range(n):
            s += _abs2(E[k, i, m]) + _abs2(E[k, j, m])
        for l in range(n):
            if l == i or l == j:
                continue
            s += _abs2(E[k, l, i]) + _abs2(E[k, l, j])
    return s


@nb.njit(**_JIT)
def total_off2(E):
    n = E.shape[0]
    s = 0.0
    for a in range(n):
        for b in range(n):
            for c in range(n):
                if not (a == b and b == c):
                    s += _abs2(E[a, b, c])
    return s


@nb.njit(**_JIT)
def _backup(E, i, j, buf):
    n = E.shape[0]
    for a in range(n):
        for b in range(n):
            buf[0, a, b] = E[i, a, b]
            buf[1, a, b] = E[j, a, b]
            buf[2, a, b] = E[a, i, b]
            buf[3, a, b] = E[a, j, b]
            buf[4, a, b] = E[a, b, i]
            buf[5, a, b] = E[a, b, j]


@nb.njit(**_JIT)
def _restore(E, i, j, buf):
    n = E.shape[0]
    for a in range(n):
        for b in range(n):
            E[i, a, b] = buf[0, a, b]
            E[j, a, b] = buf[1, a, b]
            E[a, i, b] = buf[2, a, b]
            E[a, j, b] = buf[3, a, b]
            E[a, b, i] = buf[4, a, b]
            E[a, b, j] = buf[5, a, b]


@nb.njit(**_JIT)
def regular(theta):
    """Real-domain requirement ``1 + theta_a theta_b >= 0`` in all modes."""
    for m in range(3):
        if 1.0 + (theta[2 * m] * theta[2 * m + 1]).real < 0.0:
            return False
    return True


@nb.njit(**_JIT)
def rotate_inplace(E, i, j, theta):
    n = E.shape[0]
    s1 = np.sqrt(1.0 + theta[0] * theta[1])
    s2 = np.sqrt(1.0 + theta[2] * theta[3])
    s3 = np.sqrt(1.0 + theta[4] * theta[5])
    for b in range(n):
        for c in range(n):
            x = E[i, b, c]
            y = E[j, b, c]
            E[i, b, c] = s1 * x + theta[0] * y
            E[j, b, c] = theta[1] * x + s1 * y
    for a in range(n):
        for c in range(n):
            x = E[a, i, c]
            y = E[a, j, c]
            E[a, i, c] = s2 * x + theta[2] * y
            E[a, j, c] = theta[3] * x + s2 * y
    for a in range(n):
        for b in range(n):
            x = E[a, b, i]
            y = E[a, b, j]
            E[a, b, i] = s3 * x + theta[4] * y
            E[a, b, j] = theta[5] * x + s3 * y


@nb.njit(**_JIT)
def _update_pair(mix, demix, i, j, ta, tb):
    """Mixing columns ``mix <- mix @ R^-1``; demixing rows ``demix <- R @ demix``."""
    n = mix.shape[0]
    s = np.sqrt(1.0 + ta * tb)
    for r in range(n):
        x = mix[r, i]
        y = mix[r, j]
        mix[r, i] = s * x - tb * y
        mix[r, j] = s * y - ta * x
    for c in range(n):
        x = demix[i, c]
        y = demix[j, c]
        demix[i, c] = s * x + ta * y
        demix[j, c] = tb * x + s * y


@nb.njit(**_JIT)
def solve6(H, g, mu, theta, work):
    """``theta = -(H + mu I)^-1 g`` by partial-pivot elimination.

    Returns False when the pivot ratio exceeds 1e14 (numerically singular).
    """
    for r in range(6):
        for c in range(6):
            work[r, c] = H[r, c]
        work[r, r] += mu
        work[r, 6] = -g[r]
    pmax = 0.0
    pmin = np.inf
    for k in range(6):
        piv = k
        best = abs(work[k, k])
        for r in range(k + 1, 6):
            v = abs(work[r, k])
            if v > best:
                best = v
                piv = r
        if piv != k:
            for c in range(7):
                tmp = work[k, c]
                work[k, c] = work[piv, c]
                work[piv, c] = tmp
        if best > pmax:
            pmax = best
        if best < pmin:
            pmin = best
        if best == 0.0:
            return False
        for r in range(k + 1, 6):
            f = work[r, k] / work[k, k]
            for c in range(k, 7):
                work[r, c] -= f * work[k, c]
    if pmin <= 1e-14 * pmax:
        return False
    for k in range(5, -1, -1):
        acc = work[k, 6]
        for c in range(k + 1, 6):
            acc -= work[k, c] * theta[c]
        theta[k] = acc / work[k, k]
    return True


@nb.njit(**_JIT)
def _try(E, i, j, H, g, mu, theta, work, is_real):
    """Solve and apply a step in place; NaN when no valid step was produced."""
    if not solve6(H, g, mu, theta, work):
        return np.nan
    if is_real and not regular(theta):
        return np.nan
    rotate_inplace(E, i, j, theta)
    return affected_off2(E, i, j)


@nb.njit(**_JIT)
def optimize_pair(E, i, j, is_real, mu_growth, g, H, theta, work, buf):
    """One (possibly damped) Gauss-Newton step for pair ``(i, j)``.

    Returns ``(status, delta_off2, damped)``; on SKIPPED the tensor is
    unchanged and ``theta`` is zero.
    """
    pair_terms(E, i, j, g, H)
    gn = 0.0
    hn = 0.0
    for r in range(6):
        gn += _abs2(g[r])
        for c in range(6):
            hn += _abs2(H[r, c])
    hn = np.sqrt(hn)
    if gn == 0.0 or hn == 0.0:
        theta[:] = 0
        return ACCEPTED, 0.0, False
    old = affected_off2(E, i, j)
    _backup(E, i, j, buf)
    new = _try(E, i, j, H, g, 0.0, theta, work, is_real)
    if new == new and new <= old:
        if not np.isfinite(new):
            return NONFINITE, 0.0, False
        return ACCEPTED, new - old, False
    if new == new:
        _restore(E, i, j, buf)

    mu = np.inf
    trace = 0.0
    for r in range(6):
        d = H[r, r].real
        trace += d
        if d < mu:
            mu = d
    floor = 1e-12 * (trace / 6.0 + 1.0)
    if mu <= floor:
        mu = floor
    limit = 1e12 * hn
    while mu <= limit:
        new = _try(E, i, j, H, g, mu, theta, work, is_real)
        if new == new:
            if new < old:
                if not np.isfinite(new):
                    return NONFINITE, 0.0, True
                return ACCEPTED, new - old, True
            _restore(E, i, j, buf)
        mu *= mu_growth
    theta[:] = 0
    return SKIPPED, 0.0, True


@nb.njit(**_JIT)
def sweep(E, At, Bt, Ct, A, B, C, is_real, mu_growth, extra_steps, step_off2):
    """One cyclic pass over all pairs ``i < j``.

    Returns ``(status, theta_max, off2, n_damped, n_skipped, bad_i, bad_j)``.
    ``step_off2[p]`` receives the off-diagonal energy after pair ``p``.
    """
    n = E.shape[0]
    dt = E.dtype
    g = np.empty(6, dtype=dt)
    H = np.empty((6, 6), dtype=dt)
    theta = np.zeros(6, dtype=dt)
    work = np.empty((6, 7), dtype=dt)
    buf = np.empty((6, n, n), dtype=dt)
    off2 = total_off2(E)
    theta_max = 0.0
    n_damped = 0
    n_skipped = 0
    p = 0
    for i in range(n - 1):
        for j in range(i + 1, n):
            for it in range(1 + extra_steps):
                status, delta, damped = optimize_pair(
                    E, i, j, is_real, mu_growth, g, H, theta, work, buf
                )
                if damped:
                    n_damped += 1
                if status == NONFINITE:
                    return NONFINITE, theta_max, off2, n_damped, n_skipped, i, j
                if status == SKIPPED:
                    if it == 0:
                        n_skipped += 1
                    break
                _update_pair(At, A, i, j, theta[0], theta[1])
                _update_pair(Bt, B, i, j, theta[2], theta[3])
                _update_pair(Ct, C, i, j, theta[4], theta[5])
                off2 += delta
                tn = 0.0
                for r in range(6):
                    tn += _abs2(theta[r])
                tn = np.sqrt(tn)
                if tn > theta_max:
                    theta_max = tn
                if delta == 0.0:
                    break
            step_off2[p] = off2
            p += 1
    return ACCEPTED, theta_max, off2, n_damped, n_skipped, -1, -1
