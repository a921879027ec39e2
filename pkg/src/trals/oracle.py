"""Black-box functions on ``[n]^d`` with caching and call counting."""
from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

ISING_LEVELS = (-2.5, -1.5, 1.0, 2.0)
PDE_LEVELS = (1.0, 2.0, 3.0)


class BlackBox:
    """A deterministic function ``f: [n]^d -> R`` evaluated through a cache.

    ``fn`` receives an ``(m, d)`` array of 1-based indices and returns ``m``
    values.  ``calls`` counts distinct entries ever computed through
    ``__call__``; cache hits are free.  :meth:`raw` bypasses both the cache and
    the counter and is meant for held-out error estimates.
    """

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], d: int, n: int, name: str = "f"):
        if d < 1 or n < 1:
            raise ValueError("d and n must be >= 1")
        self.fn = fn
        self.d = int(d)
        self.n = int(n)
        self.name = name
        self._cache: dict = {}
        self._lock = threading.Lock()
        # mixed-radix integer keys when they fit in int64, bytes otherwise
        self._radix = None
        if self.n ** self.d < 2 ** 62:
            self._radix = self.n ** np.arange(self.d, dtype=np.int64)

    @property
    def calls(self) -> int:
        return len(self._cache)

    def __repr__(self):
        return f"BlackBox({self.name!r}, d={self.d}, n={self.n}, calls={self.calls})"

    def _as_batch(self, X):
        X = np.asarray(X, dtype=np.int64)
        single = X.ndim == 1
        X = X.reshape(-1, self.d)
        if X.size and (X.min() < 1 or X.max() > self.n):
            raise IndexError(f"multi-index entries must lie in [1, {self.n}]")
        return X, single

    def _keys(self, X):
        if self._radix is not None:
            return ((X - 1) @ self._radix).tolist()
        return [row.tobytes() for row in X]

    def __call__(self, X):
        X, single = self._as_batch(X)
        keys = self._keys(X)
        cache = self._cache
        out = np.empty(len(keys))
        missing = {}
        for i, key in enumerate(keys):
            val = cache.get(key)
            if val is None:
                missing.setdefault(key, []).append(i)
            else:
                out[i] = val
        if missing:
            rows = [pos[0] for pos in missing.values()]
            vals = np.asarray(self.fn(X[rows]), dtype=float)
            with self._lock:
                for (key, pos), v in zip(missing.items(), vals):
                    cache.setdefault(key, float(v))
                    out[pos] = v
        return out[0] if single else out

    def raw(self, X):
        X, single = self._as_batch(X)
        vals = np.asarray(self.fn(X), dtype=float)
        return vals[0] if single else vals


def toy_oracle(d: int, n: int) -> BlackBox:
    """``1 / sqrt(1 + x_1^2 + ... + x_d^2)`` on the uniform grid ``(i-1)/(n-1)``."""
    grid = np.linspace(0.0, 1.0, n) if n > 1 else np.zeros(1)

    def fn(X):
        x = grid[X - 1]
        return 1.0 / np.sqrt(1.0 + np.sum(x * x, axis=1))

    return BlackBox(fn, d, n, name="toy")


def ising_free_energy(J: np.ndarray, beta: float) -> np.ndarray:
    """Free energy ``-log Tr(prod_i T(J_i)) / beta`` of periodic Ising chains.

    ``J`` has shape ``(m, d)``.  The 2x2 product is accumulated with a
    per-step rescaling so that ``exp(beta * |J| * d)`` never materializes.
    """
    J = np.atleast_2d(np.asarray(J, dtype=float))
    m, d = J.shape
    # T(J) = exp(beta |J|) * [[e^{beta(J-|J|)}, e^{-beta(J+|J|)}], ...]
    logscale = beta * np.abs(J).sum(axis=1)
    P = np.broadcast_to(np.eye(2), (m, 2, 2)).copy()
    for i in range(d):
        same = np.exp(beta * (J[:, i] - np.abs(J[:, i])))
        flip = np.exp(-beta * (J[:, i] + np.abs(J[:, i])))
        T = np.empty((m, 2, 2))
        T[:, 0, 0] = T[:, 1, 1] = same
        T[:, 0, 1] = T[:, 1, 0] = flip
        P = P @ T
        top = np.abs(P).max(axis=(1, 2))
        P /= top[:, None, None]
        logscale += np.log(top)
    return -(logscale + np.log(P[:, 0, 0] + P[:, 1, 1])) / beta


def ising_oracle(d: int, beta: float = 10.0, levels: Sequence[float] = ISING_LEVELS) -> BlackBox:
    if beta <= 0:
        raise ValueError("beta must be positive")
    levels = np.asarray(levels, dtype=float)
    if levels.size == 0:
        raise ValueError("levels must be nonempty")
    return BlackBox(lambda X: ising_free_energy(levels[X - 1], beta), d, levels.size, name="ising")


def pde_oracle(d: int, levels: Sequence[float] = PDE_LEVELS) -> BlackBox:
    """Effective coefficient ``(mean_i a_i)^-1`` of a 1-D periodic layered medium."""
    levels = np.asarray(levels, dtype=float)
    if np.any(levels <= 0):
        raise ValueError("conductivity levels must be positive")
    return BlackBox(lambda X: 1.0 / levels[X - 1].mean(axis=1), d, levels.size, name="pde")


def synthetic_tr_oracle(ring) -> BlackBox:
    """Entries of an explicit tensor ring, used as an exact-recovery fixture."""
    from .ring import eval_batch

    return BlackBox(lambda X: eval_batch(ring, X), ring.d, ring.n, name="synthetic")
