"""Hierarchical selection of the per-core sample sets ``Omega_k``.

Each core ``k`` is fitted on ``Omega_k = [n]^3 x Omega_k^envi``: the three
dimensions ``k-1, k, k+1`` are enumerated in full while the remaining
``d - 3`` dimensions take values from a small environment set.  The
environments come from an upward pass (pick representative skeletons inside
each group of dimensions) followed by a downward pass (pick representative
environments for each group), with greedy RRQR doing the column choice at
every node of a binary tree over triples of dimensions.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .linalg import rrqr_select
from .tensor import SkeletonSet, cyclic, grid_points, subsample

log = logging.getLogger(__name__)

# shift applied to the triple boundaries for each of the three groupings:
# (1,2,3),(4,5,6),...   (2,3,4),...,(d-1,d,1)   (d,1,2),(3,4,5),...
GROUPING_SHIFTS = (0, 1, -1)


def tree_levels(d: int) -> int:
    """``L`` with ``d = 3 * 2^L``; anything else is rejected."""
    if d < 6 or d % 3:
        raise ValueError(f"d must be of the form 3*2^L with L >= 1, got {d}")
    q = d // 3
    if q & (q - 1):
        raise ValueError(f"d must be of the form 3*2^L with L >= 1, got {d}")
    return q.bit_length() - 1


@dataclass
class GroupTree:
    d: int
    offset: int = 0
    groups: dict = field(init=False)

    def __post_init__(self):
        if self.offset not in (0, 1, 2):
            raise ValueError("offset must be 0, 1 or 2")
        self.L = tree_levels(self.d)
        shift = GROUPING_SHIFTS[self.offset]
        leaves = [
            tuple(cyclic(3 * k + j + 1 + shift, self.d) for j in range(3))
            for k in range(2 ** self.L)
        ]
        self.groups = {self.L: leaves}
        for l in range(self.L - 1, 0, -1):
            below = self.groups[l + 1]
            self.groups[l] = [below[2 * k] + below[2 * k + 1] for k in range(2 ** l)]

    def complement(self, dims) -> tuple:
        dims = set(dims)
        return tuple(j for j in range(1, self.d + 1) if j not in dims)

    @property
    def centers(self) -> list:
        return [g[1] for g in self.groups[self.L]]


def _random_from_product(sets, count, rng) -> SkeletonSet:
    dims, cols = (), []
    for st in sets:
        pick = rng.integers(0, len(st), size=count)
        dims += st.dims
        cols.append(st.values[pick])
    return SkeletonSet(dims, np.hstack(cols))


def _select(oracle, rows: SkeletonSet, cands: SkeletonSet, s: int) -> SkeletonSet:
    M = subsample(oracle, rows, cands)
    return cands.take(rrqr_select(M, s))


def upward_pass(oracle, tree: GroupTree, s: int, prior_envs=None, rng=None) -> dict:
    """In-skeletons ``{level: [SkeletonSet per group]}``, finest level first.

    Without ``prior_envs`` the environments are random: uniform over the
    complementary dimensions at the finest level, and ``s`` random picks from
    the product of the other groups' skeletons above it.
    """
    rng = np.random.default_rng(rng)
    n, L = oracle.n, tree.L
    if prior_envs is not None:
        envs = prior_envs[L]
    else:
        envs = [SkeletonSet.random(tree.complement(g), n, s, rng) for g in tree.groups[L]]
    cands = [SkeletonSet.full_grid(g, n) for g in tree.groups[L]]
    ins = {}
    for l in range(L, 0, -1):
        ins[l] = [_select(oracle, env, cand, s) for env, cand in zip(envs, cands)]
        if l == 1:
            break
        cands = [ins[l][2 * k].product(ins[l][2 * k + 1]) for k in range(2 ** (l - 1))]
        if prior_envs is not None:
            envs = prior_envs[l - 1]
        else:
            envs = [
                _random_from_product(
                    [st for j, st in enumerate(ins[l]) if j not in (2 * k, 2 * k + 1)], s, rng)
                for k in range(2 ** (l - 1))
            ]
    return ins


def downward_pass(oracle, tree: GroupTree, ins: dict, s: int) -> dict:
    """Environment skeletons ``{level: [SkeletonSet per group]}``.

    The two coarsest groups are each other's environment.  Below that, group
    ``k`` picks ``s`` columns of ``f(in_k; in_sibling x env_parent)``.
    """
    if set(ins) != set(range(1, tree.L + 1)):
        raise ValueError("in-skeletons do not match the tree")
    envs = {1: [ins[1][1], ins[1][0]]}
    for l in range(2, tree.L + 1):
        envs[l] = []
        for k in range(2 ** l):
            sib = k + 1 if k % 2 == 0 else k - 1
            cols = ins[l][sib].product(envs[l - 1][k // 2])
            envs[l].append(_select(oracle, ins[l][k], cols, s))
    return envs


def build_all_envs(oracle, d: int, s: int, passes: int = 1, rng=None,
                   extra_factor: int = 5) -> list:
    """``Omega_k^envi`` for ``k = 1..d`` (list index ``k - 1``).

    Runs ``passes`` upward/downward rounds for each of the three groupings,
    later rounds reusing the stored environments.  Each set then gets
    ``extra_factor * s`` uniformly random elements appended.
    """
    if passes < 1:
        raise ValueError("passes must be >= 1")
    if d != oracle.d:
        raise ValueError("d does not match the oracle")
    rng = np.random.default_rng(rng)
    out = [None] * d
    for offset in range(3):
        tree = GroupTree(d, offset)
        envs = None
        for p in range(passes):
            ins = upward_pass(oracle, tree, s, prior_envs=envs, rng=rng)
            envs = downward_pass(oracle, tree, ins, s)
        for center, env in zip(tree.centers, envs[tree.L]):
            out[center - 1] = env
        log.debug("grouping %d done, oracle calls so far %d", offset, oracle.calls)
    if extra_factor:
        for k, env in enumerate(out):
            extra = SkeletonSet.random(env.dims, oracle.n, extra_factor * s, rng)
            out[k] = SkeletonSet(env.dims, np.vstack([env.values, extra.values]))
    return out


def triple_dims(k: int, d: int) -> tuple:
    return (cyclic(k - 1, d), k, cyclic(k + 1, d))


@dataclass
class SampleSet:
    """Oracle values on ``Omega_k = [n]^3 x env``.

    ``values[a, b, c, j] = f(x)`` with ``x_{k-1} = a + 1``, ``x_k = b + 1``,
    ``x_{k+1} = c + 1`` and the remaining coordinates from ``env`` element ``j``.
    """

    k: int
    env: SkeletonSet
    values: np.ndarray
    d: int

    def points(self) -> np.ndarray:
        """Multi-indices in ``values.ravel(order="F")`` order."""
        n = self.values.shape[0]
        return grid_points(SkeletonSet.full_grid(triple_dims(self.k, self.d), n), self.env, self.d)

    def matrix(self) -> np.ndarray:
        """The unfolding ``f_{k; [d] minus k}(Omega_k)`` of shape ``n x n^2 |env|``."""
        n = self.values.shape[0]
        return np.transpose(self.values, (1, 0, 2, 3)).reshape(n, -1, order="F")


def assemble_sample_set(oracle, k: int, env: SkeletonSet) -> SampleSet:
    d, n = oracle.d, oracle.n
    triple = triple_dims(k, d)
    if sorted(env.dims) != sorted(set(range(1, d + 1)) - set(triple)):
        raise ValueError(f"environment for core {k} must cover exactly the dims outside {triple}")
    X = grid_points(SkeletonSet.full_grid(triple, n), env, d)
    vals = oracle(X).reshape(n, n, n, len(env), order="F")
    return SampleSet(k, env, vals, d)


def skeleton_union(sample_sets) -> tuple:
    """Deduplicated points and values of ``union_k Omega_k``."""
    X = np.vstack([ss.points() for ss in sample_sets])
    f = np.concatenate([ss.values.ravel(order="F") for ss in sample_sets])
    _, first = np.unique(X, axis=0, return_index=True)
    first.sort()
    return X[first], f[first]


def dump_envs(path, envs) -> None:
    """Write environment sets as JSON (dimension labels plus 1-based values)."""
    payload = [{"k": k + 1, **env.to_dict()} for k, env in enumerate(envs)]
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
