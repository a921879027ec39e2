import threading

import mpmath
import numpy as np
import pytest

from trals.oracle import (BlackBox, ising_free_energy, ising_oracle, pde_oracle,
                          synthetic_tr_oracle, toy_oracle)
from trals.ring import TensorRing, full_contract, random_ring


def test_toy_examples():
    assert toy_oracle(6, 10)(np.ones(6, dtype=int)) == 1.0
    assert toy_oracle(6, 10)(np.full(6, 10)) == pytest.approx(1 / np.sqrt(7))
    assert toy_oracle(1, 2)(np.array([2])) == pytest.approx(1 / np.sqrt(2))
    assert toy_oracle(3, 1)(np.ones(3, dtype=int)) == 1.0


def test_toy_grid_is_endpoint_inclusive():
    f = toy_oracle(1, 5)
    x = np.linspace(0, 1, 5)
    np.testing.assert_allclose(f(np.arange(1, 6)[:, None]), 1 / np.sqrt(1 + x ** 2))


def _naive_ising(J, beta):
    P = np.eye(2)
    for j in J:
        P = P @ np.array([[np.exp(beta * j), np.exp(-beta * j)],
                          [np.exp(-beta * j), np.exp(beta * j)]])
    return -np.log(np.trace(P)) / beta


def _closed_form_ising(J, beta):
    # all transfer matrices share eigenvectors (1,1) and (1,-1); the two
    # products nearly cancel for mixed signs, so evaluate in high precision
    with mpmath.workdps(50):
        b = mpmath.mpf(beta)
        c = mpmath.fprod(2 * mpmath.cosh(b * j) for j in J)
        s = mpmath.fprod(2 * mpmath.sinh(b * j) for j in J)
        return float(-mpmath.log(c + s) / b)


def test_ising_examples():
    assert ising_free_energy([[0.0]], 1.0)[0] == pytest.approx(-np.log(2))
    lp, lm = np.exp(10) + np.exp(-10), np.exp(10) - np.exp(-10)
    expect = -np.log(lp ** 4 + lm ** 4) / 10
    assert expect == pytest.approx(-4.06931, abs=1e-5)
    f = ising_oracle(4, 10.0, levels=(1.0,))
    assert f(np.ones(4, dtype=int)) == pytest.approx(expect, rel=1e-12)
    g = ising_oracle(12, 10.0)
    assert g(np.full(12, 4)) == pytest.approx(-(240 + np.log(2)) / 10, abs=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_ising_matches_naive_product(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 7))
    beta = float(rng.uniform(0.1, 2.0))
    J = rng.choice([-2.5, -1.5, 1.0, 2.0], size=d)
    got = ising_free_energy(J[None, :], beta)[0]
    assert got == pytest.approx(_naive_ising(J, beta), rel=1e-10)


def test_ising_no_overflow_at_benchmark_scale(rng):
    J = rng.choice([-2.5, -1.5, 1.0, 2.0], size=(50, 24))
    J[0] = -2.5
    got = ising_free_energy(J, 10.0)
    assert np.all(np.isfinite(got))
    ref = [_closed_form_ising(j, 10.0) for j in J]
    np.testing.assert_allclose(got, ref, rtol=1e-12)


def test_ising_rejects_bad_parameters():
    with pytest.raises(ValueError):
        ising_oracle(4, beta=0.0)
    with pytest.raises(ValueError):
        ising_oracle(4, levels=())


def test_pde_examples():
    f = pde_oracle(12)
    assert f(np.ones(12, dtype=int)) == 1.0
    assert f(np.full(12, 2)) == 0.5
    assert f(np.array([1] * 6 + [3] * 6)) == pytest.approx(0.5)


def test_pde_permutation_symmetric(rng):
    f = pde_oracle(8)
    X = rng.integers(1, 4, size=(20, 8))
    perm = rng.permutation(8)
    np.testing.assert_array_equal(f.raw(X), f.raw(X[:, perm]))


def test_pde_rejects_nonpositive_levels():
    with pytest.raises(ValueError):
        pde_oracle(3, levels=(1.0, 0.0))


def test_synthetic_constant_ring():
    ring = TensorRing([np.ones((1, 3, 1)) for _ in range(4)])
    f = synthetic_tr_oracle(ring)
    assert np.all(f(np.array([[1, 2, 3, 1], [3, 3, 3, 3]])) == 1.0)


def test_synthetic_matches_einsum(rng):
    ring = random_ring(3, 2, 2, rng)
    A, B, C = ring.cores
    T = np.einsum("aib,bjc,cka->ijk", A, B, C)
    f = synthetic_tr_oracle(ring)
    for idx in np.ndindex(2, 2, 2):
        assert f(np.array(idx) + 1) == pytest.approx(T[idx], abs=1e-12)
    np.testing.assert_allclose(full_contract(ring), T, atol=1e-12)


def test_cache_counts_distinct_entries():
    seen = []

    def fn(X):
        seen.append(len(X))
        return X.sum(axis=1).astype(float)

    f = BlackBox(fn, 3, 4)
    X = np.array([[1, 1, 1], [2, 1, 1], [1, 1, 1]])
    np.testing.assert_array_equal(f(X), [3, 4, 3])
    assert f.calls == 2 and seen == [2]
    f(X)
    assert f.calls == 2 and seen == [2]
    f(np.array([4, 4, 4]))
    assert f.calls == 3
    f.raw(X)
    assert f.calls == 3


def test_cache_is_transparent(rng):
    f = toy_oracle(5, 4)
    X = rng.integers(1, 5, size=(200, 5))
    np.testing.assert_array_equal(f(X), f.raw(X))
    np.testing.assert_array_equal(f(X), f(X))


def test_large_grid_keys():
    f = pde_oracle(48)  # 3^48 exceeds the integer key range
    X = np.ones((2, 48), dtype=int)
    X[1, 0] = 3
    assert f(X).shape == (2,)
    f(X)
    assert f.calls == 2


def test_out_of_range_index():
    f = pde_oracle(3)
    with pytest.raises(IndexError):
        f(np.array([1, 2, 4]))
    with pytest.raises(IndexError):
        f(np.array([0, 2, 2]))


def test_concurrent_calls_count_once():
    f = pde_oracle(6)
    X = np.indices((3,) * 6).reshape(6, -1).T + 1
    threads = [threading.Thread(target=f, args=(X,)) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert f.calls == 3 ** 6
