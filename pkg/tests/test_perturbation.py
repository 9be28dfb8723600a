import warnings

import numpy as np
import pytest

from tedia.perturbation import (NonStationaryWarning, UnstableSolutionError, analyze,
                                assemble_h1, assemble_h2, condition_stack, covariance,
                                predict_msae, stability_check)
from tedia.sweep import TransformSet, tedia
from tedia.synth import ScenarioConfig, make_cp_scenario
from tedia.tensor import diagonal_tensor, e01_tensor


@pytest.fixture(scope="module")
def stationary_point():
    t = np.random.default_rng(7).standard_normal((3, 3, 3))
    r = tedia(t, epsilon=1e-13, max_sweeps=5000)
    assert r.converged
    return t, r.transforms


def fd_jacobian(f, x0, h=1e-6):
    cols = []
    for k in range(x0.size):
        d = np.zeros_like(x0)
        d[k] = h
        cols.append((f(x0 + d) - f(x0 - d)) / (2 * h))
    return np.stack(cols, axis=1)


def test_h1_matches_finite_differences(stationary_point):
    t, tr = stationary_point
    h1 = assemble_h1(t, tr)
    assert h1.shape == (27, 27)
    fd = fd_jacobian(lambda d: condition_stack(t, tr, d), np.zeros(27))
    assert np.linalg.norm(h1 - fd) <= 1e-6 * np.linalg.norm(fd)


def test_h2_matches_finite_differences(stationary_point):
    t, tr = stationary_point
    h2 = assemble_h2(t, tr)
    assert h2.shape == (27, 27)
    fd = fd_jacobian(lambda x: condition_stack(x.reshape(t.shape), tr), t.ravel())
    assert np.linalg.norm(h2 - fd) <= 1e-6 * np.linalg.norm(fd)


def test_scale_rows_of_h2_vanish(stationary_point):
    t, tr = stationary_point
    h2 = assemble_h2(t, tr)
    for i in range(3):
        for m in range(3):
            assert not np.any(h2[(i * 3 + i) * 3 + m])


def test_zero_tensor_h2():
    assert not np.any(assemble_h2(np.zeros((3, 3, 3)), TransformSet.identity(3)))


def test_e01_unstable():
    stable, ratio = stability_check(e01_tensor(), TransformSet.identity(2))
    assert not stable and ratio < 1e-10
    rep = analyze(e01_tensor(), TransformSet.identity(2), 0.1)
    assert not rep.stable and rep.cov is None and rep.msae is None
    assert "stable: False" in rep.summary()


def test_diagonal_stable():
    stable, ratio = stability_check(diagonal_tensor([1.0, 2.0, 3.0]), TransformSet.identity(3))
    assert stable and ratio > 1e-2


def test_single_index_stable():
    stable, ratio = stability_check(np.full((1, 1, 1), 2.0), TransformSet.identity(1))
    assert stable and ratio == pytest.approx(1.0)


def test_covariance_examples(rng):
    h1 = rng.standard_normal((6, 6)) + 3 * np.eye(6)
    h2 = rng.standard_normal((6, 8))
    assert not np.any(covariance(h1, h2, 0.0))
    assert not np.any(covariance(h1, np.zeros((6, 8)), 1.0))
    np.testing.assert_allclose(covariance(np.eye(6), h2, 2.0), 2 * h2 @ h2.T, atol=1e-12)
    cov = covariance(h1, h2, 0.5)
    np.testing.assert_allclose(cov, cov.T)
    assert np.min(np.linalg.eigvalsh(cov)) >= -1e-12 * np.linalg.norm(cov)
    with pytest.raises(UnstableSolutionError):
        covariance(np.zeros((6, 6)), h2, 1.0)


def test_zero_covariance_gives_zero_msae():
    tr = TransformSet.identity(3)
    assert not np.any(predict_msae(np.zeros((27, 27)), tr))


def test_msae_scales_with_sigma2():
    sc = make_cp_scenario(ScenarioConfig(N=3, c=0.4))
    tr = tedia(sc.tensor, epsilon=1e-13).transforms
    a = analyze(sc.tensor, tr, 1e-4).msae
    b = analyze(sc.tensor, tr, 1e-2).msae
    np.testing.assert_allclose(b, 100 * a, rtol=1e-8)


def test_mode_a_unaffected_by_colinearity():
    ref = None
    for c in (0.0, 0.5, 0.8):
        sc = make_cp_scenario(ScenarioConfig(N=4, c=c))
        msae = analyze(sc.tensor, sc.transforms, 1e-4).msae
        if ref is None:
            ref = msae
        np.testing.assert_allclose(msae[0], ref[0], rtol=1e-6)


def test_larger_amplitudes_estimated_better():
    sc = make_cp_scenario(ScenarioConfig(N=4, c=0.0))
    msae = analyze(sc.tensor, sc.transforms, 1e-4).msae
    assert np.all(np.diff(msae[0]) < 0)


def test_permutation_invariance():
    sc = make_cp_scenario(ScenarioConfig(N=4, c=0.3))
    base = analyze(sc.tensor, sc.transforms, 1e-4).msae
    p = np.array([2, 0, 3, 1])
    tr = sc.transforms.permuted(p)
    perm = analyze(sc.tensor, tr, 1e-4).msae
    np.testing.assert_allclose(perm, base[:, p], rtol=1e-8)


def test_scale_conditions_fix_gauge():
    # scaling directions dA = diag(d) A satisfy the other conditions; the scale
    # rows must reject them, so H1 has trivial kernel on a diagonal core
    n = 3
    h1 = assemble_h1(diagonal_tensor([1.0, 2.0, 3.0]), TransformSet.identity(n))
    d = np.zeros((n, n, 3))
    d[0, 0, 0], d[0, 0, 1] = 1.0, -1.0
    assert np.linalg.norm(h1 @ d.ravel()) > 0.1


def test_complex_rejected(rng):
    t = rng.standard_normal((2, 2, 2)) * 1j
    with pytest.raises(TypeError):
        analyze(t, TransformSet.identity(2), 1.0)


def test_nonstationary_warning(rng):
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        rep = analyze(rng.standard_normal((3, 3, 3)), TransformSet.identity(3), 1e-3)
    assert not rep.stationary
    assert any(issubclass(x.category, NonStationaryWarning) for x in w)
