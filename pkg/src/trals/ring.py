"""Tensor-ring container, evaluation, error metrics and serialization.

A ring of ``d`` cores ``H^k`` with shapes ``(r_{k-1}, n, r_k)`` represents

    f(x) ~= Tr(H^1[x_1] H^2[x_2] ... H^d[x_d]),   H^k[v] := H^k[:, v-1, :]

where the bond after the last core closes onto the first.
"""
from __future__ import annotations

import zipfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FULL_CONTRACT_BUDGET = 10 ** 7
DEFAULT_EVAL_COUNT = 10 ** 5

_FORMAT = "trals-ring-v1"


@dataclass
class TensorRing:
    cores: list

    def __post_init__(self):
        self.cores = [np.asarray(c, dtype=float) for c in self.cores]
        if not self.cores:
            raise ValueError("a ring needs at least one core")
        for k, c in enumerate(self.cores):
            if c.ndim != 3 or min(c.shape) < 1:
                raise ValueError(f"core {k + 1} has invalid shape {c.shape}")
        n = self.cores[0].shape[1]
        d = len(self.cores)
        for k, c in enumerate(self.cores):
            nxt = self.cores[(k + 1) % d]
            if c.shape[2] != nxt.shape[0]:
                raise ValueError(
                    f"bond mismatch between cores {k + 1} and {(k + 1) % d + 1}: "
                    f"{c.shape[2]} != {nxt.shape[0]}"
                )
            if c.shape[1] != n:
                raise ValueError("all cores must share the physical size n")

    @property
    def d(self) -> int:
        return len(self.cores)

    @property
    def n(self) -> int:
        return self.cores[0].shape[1]

    @property
    def ranks(self) -> tuple:
        """``(r_1, ..., r_d)`` where ``r_k`` is the bond to the right of core k."""
        return tuple(c.shape[2] for c in self.cores)

    def copy(self) -> "TensorRing":
        return TensorRing([c.copy() for c in self.cores])

    def slice(self, k: int, v: int) -> np.ndarray:
        """``H^k[v]`` for 1-based ``k`` and ``v``."""
        return self.cores[k - 1][:, v - 1, :]


def random_ring(d: int, n: int, r: int, rng: np.random.Generator, scale: float = 1.0) -> TensorRing:
    return TensorRing([scale * rng.standard_normal((r, n, r)) for _ in range(d)])


def gibbs_chain_ring(d: int, n: int, r: int, rng: np.random.Generator,
                     noise: float = 0.0) -> TensorRing:
    """Ring of a nearest-neighbour Gibbs chain ``f(x) = prod_k W_k(x_k, x_{k+1})``.

    Every slice is a positive outer product ``a_k(v) b_k(v)^T`` so fixing any
    single coordinate cuts the ring: the chain is exactly Markov and the
    bond matrices with one index fixed are rank-1.  ``noise > 0`` adds a
    Gaussian perturbation of that relative size to every slice, which breaks
    the Markov property in a controlled way.
    """
    a = rng.uniform(0.2, 1.0, size=(d, n, r))
    b = rng.uniform(0.2, 1.0, size=(d, n, r))
    cores = []
    for k in range(d):
        nxt = (k + 1) % d
        # keep each transfer factor O(1) so f stays O(1) for any d
        mean_w = np.mean(b[k] @ a[nxt].T)
        core = np.einsum("vi,vj->ivj", a[k], b[k]) / mean_w
        if noise:
            core = core + noise * np.abs(core).mean() * rng.standard_normal(core.shape)
        cores.append(core)
    return TensorRing(cores)


def _gather(core: np.ndarray, idx: np.ndarray) -> np.ndarray:
    # (m,) 1-based indices -> (m, r_left, r_right) slices
    return np.moveaxis(core[:, idx - 1, :], 1, 0)


def chain_product(ring: TensorRing, X: np.ndarray, dims) -> np.ndarray:
    """Batched ordered products ``prod_{j in dims} H^j[X[:, j-1]]`` -> ``(m, r, r')``."""
    dims = list(dims)
    P = _gather(ring.cores[dims[0] - 1], X[:, dims[0] - 1])
    for j in dims[1:]:
        P = P @ _gather(ring.cores[j - 1], X[:, j - 1])
    return P


def eval_batch(ring: TensorRing, X) -> np.ndarray:
    """``Tr(H^1[x_1] ... H^d[x_d])`` for every row of the ``(m, d)`` array ``X``."""
    X = np.asarray(X, dtype=np.int64).reshape(-1, ring.d)
    out = np.empty(X.shape[0])
    # chunk so the (m, r, r) temporaries stay small
    step = 50_000
    for lo in range(0, X.shape[0], step):
        P = chain_product(ring, X[lo:lo + step], range(1, ring.d + 1))
        out[lo:lo + step] = np.trace(P, axis1=1, axis2=2)
    return out


def eval_tr(ring: TensorRing, x) -> float:
    """Value of the ring at a single 1-based multi-index."""
    x = tuple(int(v) for v in x)
    if len(x) != ring.d:
        raise ValueError(f"multi-index has length {len(x)}, ring has d={ring.d}")
    if min(x) < 1 or max(x) > ring.n:
        raise IndexError(f"multi-index entries must lie in [1, {ring.n}]")
    P = ring.slice(1, x[0])
    for k in range(2, ring.d + 1):
        P = P @ ring.slice(k, x[k - 1])
    return float(np.trace(P))


def full_grid(d: int, n: int) -> np.ndarray:
    """All of ``[n]^d`` as an ``(n^d, d)`` array, dimension 1 fastest."""
    return np.indices((n,) * d).reshape(d, -1, order="F").T + 1


def full_contract(ring: TensorRing, budget: int = FULL_CONTRACT_BUDGET) -> np.ndarray:
    """Dense tensor with ``T[x - 1] = eval_tr(ring, x)`` for every ``x``."""
    size = ring.n ** ring.d
    if size > budget:
        raise MemoryError(f"n^d = {size} exceeds the contraction budget {budget}")
    vals = eval_batch(ring, full_grid(ring.d, ring.n))
    return vals.reshape((ring.n,) * ring.d, order="F")


def relative_error(approx: np.ndarray, exact: np.ndarray) -> float:
    den = float(np.sum(exact * exact))
    if den == 0.0:
        raise ZeroDivisionError("reference values are identically zero")
    return float(np.sqrt(np.sum((approx - exact) ** 2) / den))


def error_E(ring: TensorRing, oracle, omega) -> float:
    """Relative RMS error of the ring against ``oracle`` on the points ``omega``.

    Uses the oracle's uncounted path: held-out evaluation is not sampling.
    """
    omega = np.asarray(omega, dtype=np.int64).reshape(-1, ring.d)
    if omega.shape[0] == 0:
        raise ValueError("evaluation set is empty")
    return relative_error(eval_batch(ring, omega), oracle.raw(omega))


def sample_eval_set(d: int, n: int, count: int = DEFAULT_EVAL_COUNT, seed: int = 0) -> np.ndarray:
    """``count`` uniform random multi-indices, or all of ``[n]^d`` if that is smaller."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if n ** d <= count:
        return full_grid(d, n)
    rng = np.random.default_rng(seed)
    return rng.integers(1, n + 1, size=(count, d))


def save_ring(path, ring: TensorRing) -> None:
    """Write ``d, n, ranks`` and the column-major flattened cores to ``.npz``."""
    flat = np.concatenate([c.ravel(order="F") for c in ring.cores])
    left = np.array([c.shape[0] for c in ring.cores], dtype=np.int64)
    with open(path, "wb") as fh:
        np.savez(fh, format=np.array(_FORMAT), d=np.int64(ring.d), n=np.int64(ring.n),
                 left_ranks=left, ranks=np.array(ring.ranks, dtype=np.int64), data=flat)


def load_ring(path) -> TensorRing:
    try:
        with np.load(Path(path), allow_pickle=False) as z:
            if str(z["format"]) != _FORMAT:
                raise ValueError(f"unknown ring format {z['format']!s}")
            d, n = int(z["d"]), int(z["n"])
            left, right, data = z["left_ranks"], z["ranks"], z["data"]
    except (OSError, KeyError, EOFError, ValueError, zipfile.BadZipFile) as exc:
        raise ValueError(f"cannot read ring file {path}: {exc}") from exc
    expected = int(np.sum(left * right) * n)
    if len(left) != d or len(right) != d or data.size != expected:
        raise ValueError(f"ring file {path} is corrupt: size mismatch")
    cores, pos = [], 0
    for rl, rr in zip(left, right):
        size = int(rl * n * rr)
        cores.append(data[pos:pos + size].reshape((int(rl), n, int(rr)), order="F"))
        pos += size
    return TensorRing(cores)
