import numpy as np
import pytest
from sklearn.base import clone

from oracles import brc_sums_bruteforce
from tedia.blocks import (BlockDetector, BlockStructure, apply_block_permutation,
                          block_offdiagonal_mass, cluster_blocks, rcm_blocks, rcm_order, similarity)
from tedia.sweep import TransformSet, check_brc, tedia
from tedia.synth import ScenarioConfig, make_block_scenario, rank6_block
from tedia.tensor import diagonal_tensor


def block_core(sizes, rng):
    n = sum(sizes)
    e = np.zeros((n, n, n))
    s = 0
    for k in sizes:
        e[s:s + k, s:s + k, s:s + k] = rng.standard_normal((k, k, k))
        s += k
    return e


def as_sets(b):
    return sorted(sorted(m.tolist()) for m in b.members())


def test_similarity_examples():
    f = similarity(diagonal_tensor([1.0, 2.0, 3.0]))
    for m in (f.F1, f.F2, f.F3):
        np.testing.assert_array_equal(m, np.diag([1.0, 2.0, 3.0]))
    np.testing.assert_array_equal(f.Fsym, np.diag([6.0, 12.0, 18.0]))


def test_similarity_mode_sums(rng):
    e = rng.standard_normal((3, 3, 3))
    f = similarity(e)
    i, j = 1, 2
    assert f.F1[i, j] == pytest.approx(sum(abs(e[k, i, j]) for k in range(3)))
    assert f.F2[i, j] == pytest.approx(sum(abs(e[i, k, j]) for k in range(3)))
    assert f.F3[i, j] == pytest.approx(sum(abs(e[i, j, k]) for k in range(3)))
    np.testing.assert_allclose(f.Fsym, f.Fsym.T)


def test_block_structure_validation():
    with pytest.raises(ValueError):
        BlockStructure(perm=[0, 0, 1], sizes=(3,))
    with pytest.raises(ValueError):
        BlockStructure(perm=[0, 1, 2], sizes=(1, 1))
    b = BlockStructure.from_labels([1, 0, 1, 2])
    assert b.sizes == (2, 1, 1) and b.perm.tolist() == [0, 2, 1, 3]
    assert b.starts == (0, 2, 3)
    np.testing.assert_array_equal(b.labels(), [0, 1, 0, 2])


def test_rcm_small_components():
    f = np.array([[0.0, 0, 1], [0, 0, 0], [1, 0, 0]])
    b = rcm_blocks(f)
    assert as_sets(b) == [[0, 2], [1]]
    assert sorted(rcm_order(f).tolist()) == [0, 1, 2]


def test_rcm_on_exact_block_core(rng):
    e = block_core((3, 2, 4), rng)
    p = rng.permutation(9)
    b = rcm_blocks(similarity(e[np.ix_(p, p, p)]))
    inv = np.argsort(p)
    truth = [[inv[k] for k in range(s, s + n)] for s, n in ((0, 3), (3, 2), (5, 4))]
    assert as_sets(b) == sorted(sorted(g) for g in truth)


def test_diagonal_input_gives_singletons():
    b = cluster_blocks(similarity(diagonal_tensor([1.0, 2.0, 3.0, 4.0])))
    assert b.sizes == (1, 1, 1, 1)
    assert rcm_blocks(similarity(diagonal_tensor([1.0, 2.0]))).sizes == (1, 1)


def test_noiseless_block_scenario_recovered():
    sc = make_block_scenario(ScenarioConfig(kind="block-diagonal", block_sizes=(5, 5, 5), seed=3))
    r = tedia(sc.tensor)
    b = cluster_blocks(similarity(r.core))
    assert sorted(b.sizes) == [5, 5, 5]
    assert block_offdiagonal_mass(r.core, b) < 1e-8


def test_noisy_two_blocks(rng):
    e = block_core((3, 3), rng)
    noisy = e + 1e-2 * rng.standard_normal(e.shape)
    b = cluster_blocks(similarity(noisy))
    assert as_sets(b) == [[0, 1, 2], [3, 4, 5]]
    forced = cluster_blocks(similarity(noisy + 0.2 * rng.standard_normal(e.shape)), n_blocks=2)
    assert len(forced.sizes) == 2


def test_permutation_equivariance(rng):
    e = block_core((2, 3, 2), rng)
    p = rng.permutation(7)
    b0 = cluster_blocks(similarity(e))
    b1 = cluster_blocks(similarity(e[np.ix_(p, p, p)]))
    mapped = sorted(sorted(p[m].tolist()) for m in b1.members())
    assert mapped == as_sets(b0)


def test_cluster_stop_ratio_validation():
    with pytest.raises(ValueError):
        cluster_blocks(np.eye(3), stop_ratio=0)


def test_compound_blocks_satisfy_brc(rng):
    # sums over a block-diagonal core vanish when i and j sit in different blocks
    e = np.zeros((6, 6, 6))
    e[:3, :3, :3] = rank6_block(3, rng)
    e[3:, 3:, 3:] = rank6_block(3, rng)
    for (mode, i, j), v in brc_sums_bruteforce(e).items():
        if (i < 3) != (j < 3):
            assert abs(v) < 1e-12


def test_apply_block_permutation_preserves_model(rng):
    e = block_core((2, 2), rng)
    mix = [rng.standard_normal((4, 4)) + 4 * np.eye(4) for _ in range(3)]
    tr = TransformSet.from_mixing(*mix)
    t = tr.reconstruct(e)
    b = BlockStructure(perm=np.array([2, 0, 3, 1]), sizes=(2, 2))
    e2, tr2 = apply_block_permutation(e, tr, b)
    np.testing.assert_allclose(tr2.reconstruct(e2), t, atol=1e-10)
    np.testing.assert_allclose(tr2.demix(t), e2, atol=1e-10)


def test_offdiagonal_mass():
    e = np.zeros((2, 2, 2))
    e[0, 0, 0] = e[1, 1, 1] = 1
    assert block_offdiagonal_mass(e, BlockStructure.singletons(2)) == 0
    e[0, 1, 1] = 1
    assert block_offdiagonal_mass(e, BlockStructure.singletons(2)) == pytest.approx(1 / np.sqrt(3))
    assert block_offdiagonal_mass(e, BlockStructure.from_labels([0, 0])) == 0


def test_detector_estimator(rng):
    e = block_core((2, 3), rng)
    for method in ("cluster", "rcm"):
        det = BlockDetector(method=method)
        assert clone(det).get_params() == det.get_params()
        det.fit(e)
        assert sorted(det.block_sizes_) == [2, 3]
        assert det.transform(e).shape == e.shape
    with pytest.raises(ValueError):
        BlockDetector(method="nope").fit(e)


def test_brc_within_blocks_is_generic():
    rng = np.random.default_rng(0)
    e = np.zeros((4, 4, 4))
    e[:2, :2, :2] = rank6_block(2, rng)
    e[2:, 2:, 2:] = rank6_block(2, rng)
    ok, _ = check_brc(e, 1e-12)
    assert not ok  # within-block sums are generic
