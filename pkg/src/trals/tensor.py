"""Dense tensors, multi-index helpers and unfoldings.

Conventions used throughout the package:

* Multi-indices and dimension labels are 1-based, as in ``x = (x_1, ..., x_d)``
  with ``x_k in [n]``.  Arrays of multi-indices have shape ``(m, d)``.
* Dense tensors are plain numpy arrays.  Their flat linearization is
  column-major: dimension 1 varies fastest.  Every reshape in this module is
  defined relative to that order.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


def mod_index(x: Sequence[int], i: int, d: int) -> int:
    """Return ``x_{((i-1) mod d) + 1}``; ``i`` may be any integer."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return x[(i - 1) % d]


def cyclic(i: int, d: int) -> int:
    """Wrap a 1-based dimension label onto ``[1, d]``."""
    return (i - 1) % d + 1


def _check_split(ndim, rows, cols):
    rows, cols = tuple(rows), tuple(cols)
    if set(rows) & set(cols):
        raise ValueError(f"dimension sets overlap: {rows} / {cols}")
    if sorted(rows + cols) != list(range(1, ndim + 1)):
        raise ValueError(f"dimension sets {rows} / {cols} do not cover 1..{ndim}")
    return rows, cols


def reshape_group(T: np.ndarray, rows: Sequence[int], cols: Sequence[int]) -> np.ndarray:
    """Unfold ``T`` into the matrix ``T_{rows; cols}``.

    ``rows`` and ``cols`` are disjoint 1-based dimension labels covering all
    dims of ``T``.  Within each group the first listed dimension varies
    fastest.  An empty ``rows`` gives a ``1 x N`` matrix, i.e. ``vec(T)``
    as a row.
    """
    T = np.asarray(T)
    rows, cols = _check_split(T.ndim, rows, cols)
    perm = [a - 1 for a in rows] + [b - 1 for b in cols]
    nr = int(np.prod([T.shape[a - 1] for a in rows], dtype=np.int64))
    nc = int(np.prod([T.shape[b - 1] for b in cols], dtype=np.int64))
    return np.transpose(T, perm).reshape(nr, nc, order="F")


def unreshape_group(M: np.ndarray, rows: Sequence[int], cols: Sequence[int],
                    shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`reshape_group` for a tensor of the given ``shape``."""
    rows, cols = _check_split(len(shape), rows, cols)
    perm = [a - 1 for a in rows] + [b - 1 for b in cols]
    permuted = np.asarray(M).reshape([shape[p] for p in perm], order="F")
    return np.transpose(permuted, np.argsort(perm))


def frobenius_norm(T) -> float:
    return float(np.sqrt(np.sum(np.square(np.asarray(T, dtype=float)))))


@dataclass(frozen=True)
class SkeletonSet:
    """A set of partial multi-indices over a labelled group of dimensions.

    ``values[j, i]`` is the (1-based) index that element ``j`` assigns to
    dimension ``dims[i]``.  Dimension labels travel with the values, so sets
    over interleaved dimension groups can be combined without positional
    bookkeeping.
    """

    dims: tuple
    values: np.ndarray

    def __post_init__(self):
        dims = tuple(int(a) for a in self.dims)
        if len(set(dims)) != len(dims):
            raise ValueError(f"repeated dimension label in {dims}")
        values = np.asarray(self.values, dtype=np.int64).reshape(-1, len(dims))
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.shape[0]

    def __iter__(self):
        for row in self.values:
            yield dict(zip(self.dims, row.tolist()))

    def take(self, idx) -> "SkeletonSet":
        return SkeletonSet(self.dims, self.values[np.asarray(idx, dtype=np.int64)])

    def product(self, other: "SkeletonSet") -> "SkeletonSet":
        """Cartesian product; elements of ``self`` vary fastest."""
        if set(self.dims) & set(other.dims):
            raise ValueError("cannot take product of sets sharing dimensions")
        a, b = len(self), len(other)
        left = np.tile(self.values, (b, 1))
        right = np.repeat(other.values, a, axis=0)
        return SkeletonSet(self.dims + other.dims, np.hstack([left, right]))

    def unique(self) -> "SkeletonSet":
        _, first = np.unique(self.values, axis=0, return_index=True)
        return SkeletonSet(self.dims, self.values[np.sort(first)])

    @classmethod
    def full_grid(cls, dims, n: int) -> "SkeletonSet":
        dims = tuple(dims)
        grid = np.indices((n,) * len(dims)).reshape(len(dims), -1, order="F").T + 1
        return cls(dims, grid)

    @classmethod
    def random(cls, dims, n: int, count: int, rng: np.random.Generator) -> "SkeletonSet":
        dims = tuple(dims)
        return cls(dims, rng.integers(1, n + 1, size=(count, len(dims))))

    def to_dict(self) -> dict:
        return {"dims": list(self.dims), "values": self.values.tolist()}


def combine(d: int, *parts: SkeletonSet) -> np.ndarray:
    """Zip equally sized skeleton sets into full ``(m, d)`` multi-indices."""
    m = len(parts[0])
    X = np.zeros((m, d), dtype=np.int64)
    seen = []
    for part in parts:
        if len(part) != m:
            raise ValueError("parts must have equal length")
        for i, dim in enumerate(part.dims):
            X[:, dim - 1] = part.values[:, i]
        seen.extend(part.dims)
    if sorted(seen) != list(range(1, d + 1)):
        raise ValueError(f"dimension labels {sorted(seen)} do not cover 1..{d}")
    return X


def grid_points(omega1: SkeletonSet, omega2: SkeletonSet, d: int) -> np.ndarray:
    """Multi-indices of ``omega1 x omega2`` with ``omega1`` varying fastest."""
    return combine(d, omega1.product(omega2))


def subsample(oracle, omega1: SkeletonSet, omega2: SkeletonSet) -> np.ndarray:
    """The ``|omega1| x |omega2|`` matrix ``f(omega1; omega2)``."""
    X = grid_points(omega1, omega2, oracle.d)
    vals = oracle(X)
    return vals.reshape(len(omega1), len(omega2), order="F")
