"""Numerical checks of the structural assumptions behind the initializer.

A ring split into consecutive regions ``c1, a, c2, b`` is "Markov" when
freezing ``a`` and ``b`` makes ``f`` rank-1 as a matrix over ``c1 x c2``.
The quantities here measure how close a function is to that:

* ``alpha_ratio``: ``sigma_1^2 / ||.||_F^2`` of the frozen ``c1 x c2`` slice,
* ``segment_product``: the bond matrix ``B`` of a region under canonical
  sampling, whose ``rank1_ratio`` should be close to 1,
* ``condition_kappa``: conditioning of a segment's unfolding with the two
  bond legs grouped together.

For any instance, ``rank1_ratio(B) >= alpha_z / kappa^4`` where ``kappa``
bounds the condition numbers of the ``c1`` and ``c2`` segments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .initializer import initialize_ring
from .ring import chain_product, full_grid, relative_error, eval_batch, gibbs_chain_ring
from .oracle import synthetic_tr_oracle
from .tensor import SkeletonSet, cyclic, subsample

MATERIALIZE_BUDGET = 10 ** 6


def _check_contiguous(region, d):
    region = [int(j) for j in region]
    if not region:
        raise ValueError("region is empty")
    for a, b in zip(region, region[1:]):
        if b != cyclic(a + 1, d):
            raise ValueError(f"region {region} is not contiguous on the ring")
    return region


def segment_product(ring, region, x_region) -> np.ndarray:
    """Ordered product ``prod_{j in region} H^j[x_j]`` over a contiguous region.

    ``x_region`` gives the 1-based index of each region dimension, in order.
    """
    region = _check_contiguous(region, ring.d)
    x_region = list(x_region)
    if len(x_region) != len(region):
        raise ValueError("x_region must assign every region dimension")
    B = ring.slice(region[0], x_region[0])
    for j, v in zip(region[1:], x_region[1:]):
        B = B @ ring.slice(j, v)
    return B


def rank1_ratio(B) -> float:
    """``||B||_2^2 / ||B||_F^2``; 1 exactly for rank-1 matrices."""
    B = np.asarray(B, dtype=float)
    fro2 = float(np.sum(B * B))
    if fro2 == 0.0:
        raise ValueError("rank-1 ratio of a zero matrix is undefined")
    s1 = np.linalg.norm(B, 2)
    return min(1.0, s1 * s1 / fro2)


def alpha_ratio(oracle, partition, z) -> float:
    """Rank-1 ratio of ``f`` over ``c1 x c2`` with ``a`` and ``b`` frozen at ``z``.

    ``partition = (a, b, c1, c2)`` holds 1-based dimension labels; ``z`` gives
    the values on ``a + b`` in that order.
    """
    a, b, c1, c2 = (tuple(p) for p in partition)
    n = oracle.n
    size = n ** len(c1) * n ** len(c2)
    if size > MATERIALIZE_BUDGET:
        raise MemoryError(f"c1 x c2 slice has {size} entries, over budget")
    frozen = SkeletonSet(a + b, np.asarray(z, dtype=np.int64).reshape(1, -1))
    rows = SkeletonSet.full_grid(c1, n)
    cols = SkeletonSet.full_grid(c2, n).product(frozen)
    return rank1_ratio(subsample(oracle, rows, cols))


def condition_kappa(ring, segment) -> float:
    """``sigma_1 / sigma_{r^2}`` of the segment unfolding (bond pair x physical legs).

    Infinite when the unfolding has rank below ``r_left * r_right``.
    """
    segment = _check_contiguous(segment, ring.d)
    n = ring.n
    rl = ring.cores[segment[0] - 1].shape[0]
    rr = ring.cores[segment[-1] - 1].shape[2]
    need = rl * rr
    if n ** len(segment) < need:
        raise ValueError(f"segment of length {len(segment)} is too short: n^L < {need}")
    grid = full_grid(len(segment), n)
    X = np.ones((grid.shape[0], ring.d), dtype=np.int64)
    X[:, [j - 1 for j in segment]] = grid
    M = chain_product(ring, X, segment).reshape(grid.shape[0], need).T
    s = np.linalg.svd(M, compute_uv=False)
    if s[need - 1] <= np.finfo(float).eps * s[0] * max(M.shape):
        return math.inf
    return float(s[0] / s[need - 1])


def min_segment_length(n: int, r: int) -> int:
    """Shortest segment length ``L`` with ``n^L >= r^2``."""
    L = 1
    while n ** L < r * r:
        L += 1
    return L


def ring_partition(d: int, k: int, lc: int) -> tuple:
    """``(a, b, c1, c2)`` with ``a = {k}`` flanked by ``lc`` dims on each side."""
    if d < 2 * lc + 2:
        raise ValueError(f"d={d} too small for flanking segments of length {lc}")
    c1 = tuple(cyclic(k - lc + i, d) for i in range(lc))
    a = (k,)
    c2 = tuple(cyclic(k + 1 + i, d) for i in range(lc))
    used = set(c1 + a + c2)
    start = cyclic(k + lc + 1, d)
    b = tuple(cyclic(start + i, d) for i in range(d) if cyclic(start + i, d) not in used)
    return a, b, c1, c2


@dataclass
class PartitionReport:
    k: int
    partition: tuple
    alpha: float          # min over sampled z
    kappa: float          # max over the c1, c2 segments
    ratio_b1: float       # min over sampled z
    ratio_b2: float
    bound: float          # alpha_z / kappa^4, min over z

    @property
    def holds(self) -> bool:
        return min(self.ratio_b1, self.ratio_b2) >= self.bound * (1 - 1e-9)


def check_partition(ring, oracle, partition, zs) -> PartitionReport:
    """Measure alpha, kappa and the two bond rank-1 ratios for one partition.

    The bound is checked per ``z``: each bond ratio is compared with
    ``alpha_z / kappa^4`` at the same frozen values.
    """
    a, b, c1, c2 = partition
    kappa = max(condition_kappa(ring, c1), condition_kappa(ring, c2))
    alphas, r1s, r2s, margins, bounds = [], [], [], [], []
    for z in zs:
        z = np.asarray(z, dtype=np.int64)
        al = alpha_ratio(oracle, partition, z)
        r1 = rank1_ratio(segment_product(ring, a, z[:len(a)]))
        r2 = rank1_ratio(segment_product(ring, b, z[len(a):]))
        bound = al / kappa ** 4 if math.isfinite(kappa) else 0.0
        alphas.append(al)
        r1s.append(r1)
        r2s.append(r2)
        bounds.append(bound)
        margins.append(min(r1, r2) - bound)
    worst = int(np.argmin(margins))
    return PartitionReport(a[0], partition, min(alphas), kappa, min(r1s), min(r2s), bounds[worst])


def diagnose(ring, oracle, lc=None, z_count: int = 10, rng=None) -> list:
    """One :class:`PartitionReport` per core, each core taken as region ``a``."""
    rng = np.random.default_rng(rng)
    lc = lc or min_segment_length(ring.n, max(ring.ranks))
    out = []
    for k in range(1, ring.d + 1):
        part = ring_partition(ring.d, k, lc)
        zs = rng.integers(1, ring.n + 1, size=(z_count, len(part[0]) + len(part[1])))
        out.append(check_partition(ring, oracle, part, zs))
    return out


def initializer_recovery(truth, r=None, seed=0, z_mode="shared") -> float:
    """Full-grid relative error of the initializer's ring against ``truth``."""
    oracle = synthetic_tr_oracle(truth)
    fit = initialize_ring(oracle, r or max(truth.ranks), np.random.default_rng(seed), z_mode)
    X = full_grid(truth.d, truth.n)
    return relative_error(eval_batch(fit.ring, X), oracle.raw(X))


def markov_trend(noises, d=6, n=4, r=2, seed=0, z_count=10):
    """``(alpha, recovery_error)`` for Gibbs chains perturbed by each noise level.

    The same base chain and noise pattern are used at every level, so only
    the perturbation size changes.  ``alpha`` is the mean frozen-slice ratio
    over the initializer's partitions (``a = {k}``, single-dim flanks).
    """
    out = []
    for eta in noises:
        truth = gibbs_chain_ring(d, n, r, np.random.default_rng(seed), noise=eta)
        oracle = synthetic_tr_oracle(truth)
        zrng = np.random.default_rng(seed + 1)
        alphas = []
        for k in range(1, d + 1):
            part = ring_partition(d, k, 1)
            for z in zrng.integers(1, n + 1, size=(z_count, d - 2)):
                alphas.append(alpha_ratio(oracle, part, z))
        out.append((float(np.mean(alphas)), initializer_recovery(truth, r, seed)))
    return out
