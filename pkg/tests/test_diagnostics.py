import math

import numpy as np
import pytest
from scipy.stats import spearmanr

from trals.diagnostics import (alpha_ratio, check_partition, condition_kappa, diagnose,
                               markov_trend, min_segment_length, rank1_ratio, ring_partition,
                               segment_product)
from trals.oracle import BlackBox, pde_oracle, synthetic_tr_oracle
from trals.ring import TensorRing, gibbs_chain_ring, random_ring


def test_segment_product_examples(rng):
    ring = random_ring(6, 3, 2, rng)
    np.testing.assert_array_equal(segment_product(ring, [4], [2]), ring.slice(4, 2))
    np.testing.assert_allclose(segment_product(ring, [2, 3], [1, 3]),
                               ring.slice(2, 1) @ ring.slice(3, 3))
    np.testing.assert_allclose(segment_product(ring, [6, 1], [2, 2]),
                               ring.slice(6, 2) @ ring.slice(1, 2))
    scalar = random_ring(4, 2, 1, rng)
    B = segment_product(scalar, [1, 2, 3], [1, 2, 1])
    assert B.shape == (1, 1)
    assert B[0, 0] == pytest.approx(scalar.cores[0][0, 0, 0] * scalar.cores[1][0, 1, 0]
                                    * scalar.cores[2][0, 0, 0])


def test_segment_product_errors(rng):
    ring = random_ring(6, 3, 2, rng)
    with pytest.raises(ValueError):
        segment_product(ring, [1, 3], [1, 1])
    with pytest.raises(ValueError):
        segment_product(ring, [1, 2], [1])


def test_rank1_ratio_examples(rng):
    assert rank1_ratio(np.outer(rng.standard_normal(3), rng.standard_normal(4))) == pytest.approx(1.0)
    assert rank1_ratio(np.eye(2)) == pytest.approx(0.5)
    assert rank1_ratio(np.diag([2.0, 1.0])) == pytest.approx(0.8)
    with pytest.raises(ValueError):
        rank1_ratio(np.zeros((2, 2)))


def test_rank1_ratio_range(rng):
    for _ in range(20):
        B = rng.standard_normal(tuple(rng.integers(1, 6, size=2)))
        assert 0 < rank1_ratio(B) <= 1


def test_alpha_separable_is_one(rng):
    g = rng.uniform(0.5, 2.0, size=(6, 3))
    f = BlackBox(lambda X: np.prod(g[np.arange(6), X - 1], axis=1), 6, 3)
    part = ring_partition(6, 3, 1)
    for z in rng.integers(1, 4, size=(5, 4)):
        assert alpha_ratio(f, part, z) == pytest.approx(1.0)


def test_alpha_pde_below_one():
    f = pde_oracle(6)
    a = alpha_ratio(f, ring_partition(6, 1, 2), [1, 2])
    assert 0 < a < 1


def test_alpha_gibbs_chain(rng):
    ring = gibbs_chain_ring(8, 4, 3, rng)
    f = synthetic_tr_oracle(ring)
    part = ring_partition(8, 5, 2)
    for z in rng.integers(1, 5, size=(10, 4)):
        assert alpha_ratio(f, part, z) >= 0.999


def test_alpha_budget():
    with pytest.raises(MemoryError):
        alpha_ratio(pde_oracle(30), ring_partition(30, 1, 13), [1] * 4)


def test_kappa_rank_one_ring(rng):
    assert condition_kappa(random_ring(5, 3, 1, rng), [2]) == pytest.approx(1.0)


def test_kappa_orthogonal_segment():
    Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((4, 4)))
    core = np.stack([Q[:, x].reshape(2, 2) for x in range(4)], axis=1)
    ring = TensorRing([core] * 5)
    assert condition_kappa(ring, [3]) == pytest.approx(1.0, abs=1e-10)


def test_kappa_positive_segment_is_finite(rng):
    ring = TensorRing([rng.uniform(0.1, 1.0, size=(2, 4, 2)) for _ in range(6)])
    k = condition_kappa(ring, [2, 3])
    assert 1 <= k < math.inf


def test_kappa_rank_deficient_is_infinite(rng):
    ring = random_ring(5, 4, 2, rng)
    ring.cores[1][:, 1:, :] = ring.cores[1][:, :1, :]  # all slices equal: rank 1
    assert condition_kappa(ring, [2]) == math.inf


def test_kappa_segment_too_short(rng):
    with pytest.raises(ValueError):
        condition_kappa(random_ring(6, 3, 2, rng), [1])
    assert min_segment_length(3, 2) == 2
    assert min_segment_length(4, 2) == 1


def test_ring_partition_layout():
    a, b, c1, c2 = ring_partition(8, 1, 2)
    assert (a, c1, c2) == ((1,), (7, 8), (2, 3))
    assert b == (4, 5, 6)
    with pytest.raises(ValueError):
        ring_partition(5, 1, 2)


def test_markov_bond_matrices_are_rank_one(rng):
    ring = gibbs_chain_ring(6, 4, 2, rng)
    rows = diagnose(ring, synthetic_tr_oracle(ring), z_count=5, rng=1)
    assert len(rows) == 6
    for rep in rows:
        assert rep.ratio_b1 >= 1 - 1e-6 and rep.ratio_b2 >= 1 - 1e-6
        assert rep.alpha >= 0.999
        assert rep.holds


@pytest.mark.parametrize("seed", range(10))
def test_bond_ratio_bound_with_noise(seed):
    rng = np.random.default_rng(seed)
    ring = gibbs_chain_ring(4, 4, 2, rng, noise=0.1 * seed)
    rep = check_partition(ring, synthetic_tr_oracle(ring), ((2,), (4,), (1,), (3,)),
                          rng.integers(1, 5, size=(4, 2)))
    assert math.isfinite(rep.kappa)
    assert min(rep.ratio_b1, rep.ratio_b2) >= rep.bound


def test_recovery_error_tracks_alpha():
    trend = markov_trend([0.0, 0.01, 0.1, 0.5], seed=3)
    alphas, errors = zip(*trend)
    assert errors[0] <= 1e-10
    assert spearmanr(alphas, errors).statistic < -0.8
