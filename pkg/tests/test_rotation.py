import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_tensor
from oracles import explicit_jacobian, off_vec
from tedia.rotation import (RegularityError, RotationParams, SingularStepError, apply_rotation,
                            elementary_rotation, pair_gradient, pair_hessian, rotation_matrices,
                            solve_step)
from tedia.tensor import diagonal_tensor, e01_tensor, multi_mode_product, off_norm


def test_zero_theta_gives_identity():
    np.testing.assert_array_equal(elementary_rotation((0.0, 0.0), 0, 2, 4), np.eye(4))


def test_unit_theta_block():
    m = elementary_rotation((1.0, 1.0), 0, 1, 2)
    np.testing.assert_allclose(m, [[np.sqrt(2), 1], [1, np.sqrt(2)]])
    assert np.linalg.det(m) == pytest.approx(1.0, abs=1e-14)


@settings(max_examples=100, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_determinant_is_one(ta, tb):
    if 1 + ta * tb < 0:
        with pytest.raises(RegularityError):
            elementary_rotation((ta, tb), 1, 3, 5)
        return
    m = elementary_rotation((ta, tb), 1, 3, 5)
    assert abs(np.linalg.det(m) - 1) < 1e-13 * max(1.0, abs(ta * tb))


def test_complex_determinant(rng):
    ta, tb = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    assert abs(np.linalg.det(elementary_rotation((ta, tb), 0, 1, 3)) - 1) < 1e-14


def test_pair_validation():
    with pytest.raises(ValueError):
        pair_gradient(np.ones((3, 3, 3)), 1, 1)
    with pytest.raises(IndexError):
        pair_hessian(np.ones((3, 3, 3)), 0, 3)


def test_diagonal_gradient_vanishes():
    e = diagonal_tensor([1.0, 2.0, 3.0])
    for i in range(3):
        for j in range(3):
            if i != j:
                assert not np.any(pair_gradient(e, i, j).g)


def test_e01_gradient_vanishes():
    assert np.max(np.abs(pair_gradient(e01_tensor(), 0, 1).g)) < 1e-14


def test_hessian_hand_value():
    h = pair_hessian(diagonal_tensor([1.0, 2.0, 3.0]), 0, 1).H
    assert h[0, 0] == pytest.approx(4.0)


def test_zero_tensor_hessian():
    assert not np.any(pair_hessian(np.zeros((3, 3, 3)), 0, 2).H)


@pytest.mark.parametrize("complex_", [False, True])
@pytest.mark.parametrize("n", [3, 4, 5])
def test_against_explicit_jacobian(rng, n, complex_):
    e = random_tensor(rng, n, complex_)
    for i, j in [(0, 1), (1, n - 1), (n - 1, 0)]:
        J = explicit_jacobian(e, i, j)
        g = pair_gradient(e, i, j).g
        H = pair_hessian(e, i, j).H
        g_ref = J.conj().T @ off_vec(e)
        H_ref = J.conj().T @ J
        assert np.linalg.norm(g - g_ref) <= 1e-10 * np.linalg.norm(g_ref)
        assert np.linalg.norm(H - H_ref) <= 1e-10 * np.linalg.norm(H_ref)


def test_fibers_exposed(rng):
    e = random_tensor(rng, 4)
    h = pair_hessian(e, 1, 2)
    np.testing.assert_array_equal(h.u_ij, e[1, 2, :])
    np.testing.assert_array_equal(h.v_ij, e[1, :, 2])
    np.testing.assert_array_equal(h.w_ij, e[:, 1, 2])


@pytest.mark.parametrize("n", [3, 4, 5])
def test_gradient_matches_finite_differences(rng, n):
    e = random_tensor(rng, n)
    i, j = 0, n - 1
    g = pair_gradient(e, i, j).g
    h = 1e-6
    fd = np.zeros(6)
    for r in range(6):
        d = np.zeros(6)
        d[r] = h
        fp = 0.5 * off_norm(apply_rotation(e, RotationParams(d, i, j))) ** 2
        fm = 0.5 * off_norm(apply_rotation(e, RotationParams(-d, i, j))) ** 2
        fd[r] = (fp - fm) / (2 * h)
    assert np.linalg.norm(fd - g) <= 1e-6 * np.linalg.norm(g)


@pytest.mark.parametrize("complex_", [False, True])
def test_hessian_hermitian_psd(rng, complex_):
    e = random_tensor(rng, 5, complex_)
    H = pair_hessian(e, 2, 4).H
    np.testing.assert_allclose(H, H.conj().T, atol=1e-12)
    assert np.all(np.diag(H).real >= -1e-12)
    assert np.min(np.linalg.eigvalsh(H)) >= -1e-10 * np.linalg.norm(H)


def test_solve_step_examples(rng):
    assert not np.any(solve_step(np.zeros(6), rng.standard_normal((6, 6))).theta)
    g = np.zeros(6)
    g[0] = 1
    np.testing.assert_allclose(solve_step(g, np.eye(6)).theta, [-1, 0, 0, 0, 0, 0])
    X = rng.standard_normal((6, 6))
    H = X @ X.T + np.eye(6)
    g = rng.standard_normal(6)
    theta = solve_step(g, H, mu=0.3).theta
    assert np.linalg.norm((H + 0.3 * np.eye(6)) @ theta + g) < 1e-10


def test_solve_step_singular():
    with pytest.raises(SingularStepError):
        solve_step(np.ones(6), np.zeros((6, 6)))


def test_apply_rotation_zero_is_identity(rng):
    e = random_tensor(rng, 4)
    np.testing.assert_array_equal(apply_rotation(e, RotationParams(np.zeros(6), 0, 1)), e)


@pytest.mark.parametrize("complex_", [False, True])
def test_sparse_update_matches_dense(rng, complex_):
    e = random_tensor(rng, 5, complex_)
    theta = 0.3 * rng.standard_normal(6)
    if complex_:
        theta = theta + 0.3j * rng.standard_normal(6)
    p = RotationParams(theta, 1, 3)
    if not complex_ and not p.is_regular():
        pytest.skip("irregular draw")
    dense = multi_mode_product(e, *rotation_matrices(theta, 1, 3, 5))
    assert np.max(np.abs(apply_rotation(e, p) - dense)) < 1e-12
    for m in p.matrices(5):
        assert abs(np.linalg.det(m) - 1) < 1e-14


def test_apply_rotation_rejects_irregular(rng):
    theta = np.array([2.0, -2.0, 0, 0, 0, 0])
    with pytest.raises(RegularityError):
        apply_rotation(random_tensor(rng, 3), RotationParams(theta, 0, 1))


def test_pair_cost_is_quadratic(rng):
    import time

    from tedia import _kernels

    # time the kernel behind pair_gradient/pair_hessian; wrapper overhead is constant
    def cost(n):
        e = random_tensor(rng, n)
        g, H = np.empty(6), np.empty((6, 6))
        _kernels.pair_terms(e, 0, 1, g, H)
        best = np.inf
        for _ in range(7):
            tic = time.perf_counter()
            for _ in range(2000):
                _kernels.pair_terms(e, 0, 1, g, H)
            best = min(best, time.perf_counter() - tic)
        return best

    ratio = cost(40) / cost(20)
    assert 2.5 <= ratio <= 6, ratio
