"""SVD initialization of every core followed by least-squares gauge fixing.

For each core ``k`` the function is restricted to dims ``k-1, k, k+1`` with
everything else frozen at a reference point.  Two SVDs split that ``n^3``
block into a three-node train ``TL, TC, TR``; ``TC`` is ``H^k`` up to an
unknown gauge on each bond.  The gauge between ``TC^k`` and ``TC^{k+1}`` is
then fitted to an ``n^4`` block over dims ``k-1 .. k+2``.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .linalg import RankDeficiencyWarning, ridge_ls, truncated_svd
from .ring import TensorRing, eval_batch
from .tensor import cyclic

log = logging.getLogger(__name__)

# singular values below this fraction of the largest are treated as zero
SVD_RTOL = 1e-12

Z_MODES = ("shared", "independent", "envi")


@dataclass
class LocalTriple:
    TL: np.ndarray  # (n, r)
    TC: np.ndarray  # (r, n, r)
    TR: np.ndarray  # (r, n)
    sL: np.ndarray
    sR: np.ndarray


def sample_block(oracle, dims, x_ref) -> np.ndarray:
    """``f`` on the full grid over ``dims`` with other coordinates from ``x_ref``.

    Returns an array of shape ``(n,) * len(dims)`` whose axes follow ``dims``.
    """
    n = oracle.n
    return oracle(_block_points(dims, x_ref, n)).reshape((n,) * len(dims))


def _inv_sqrt(s):
    keep = s > SVD_RTOL * (s[0] if s.size else 0.0)
    if not keep.all():
        warnings.warn("rank-deficient local block; pseudo-inverting its singular values",
                      RankDeficiencyWarning, stacklevel=3)
    return np.where(keep, 1.0 / np.sqrt(np.where(keep, s, 1.0)), 0.0)


def split_block(T: np.ndarray, r: int) -> LocalTriple:
    """Factor an ``n x n x n`` block into ``TL (n,r), TC (r,n,r), TR (r,n)``.

    ``TL TC TR`` reproduces the two-step truncated SVD of ``T``; factors are
    zero-padded up to ``r`` when the block has fewer singular values.
    """
    n = T.shape[0]
    UL, sL, VL = truncated_svd(T.reshape(n, n * n), r)
    k1 = sL.size
    C = (sL[:, None] * VL.T).reshape(k1 * n, n)
    UR, sR, VR = truncated_svd(C, r)
    k2 = sR.size
    TCt = (UR * sR).reshape(k1, n, k2)
    TL = np.zeros((n, r))
    TR = np.zeros((r, n))
    TC = np.zeros((r, n, r))
    TL[:, :k1] = UL * np.sqrt(sL)
    TR[:k2] = np.sqrt(sR)[:, None] * VR.T
    TC[:k1, :, :k2] = TCt * _inv_sqrt(sL)[:, None, None] * _inv_sqrt(sR)[None, None, :]
    return LocalTriple(TL, TC, TR, sL, sR)


def local_tt_svd(oracle, k: int, r: int, x_ref) -> LocalTriple:
    """Split ``f`` restricted to dims ``k-1, k, k+1`` (rest from ``x_ref``)."""
    d = oracle.d
    T = sample_block(oracle, (cyclic(k - 1, d), k, cyclic(k + 1, d)), x_ref)
    return split_block(T, r)


@dataclass
class GaugeFit:
    ring: TensorRing
    gauges: list
    residuals: list  # relative LS residual per bond
    scale: float


def _gauge_pieces(left: LocalTriple, right: LocalTriple):
    n = left.TL.shape[0]
    L = np.einsum("ai,ibj->abj", left.TL, left.TC).reshape(n * n, -1)
    R = np.einsum("icj,je->ice", right.TC, right.TR).reshape(-1, n * n)
    return L, R


def gauge_fix(oracle, triples, x_refs) -> GaugeFit:
    """Fit bond gauges ``G^k`` and assemble ``H^k = TC^k G^k``.

    ``x_refs[k-1]`` is the reference point whose coordinates outside dims
    ``k-1 .. k+2`` freeze the ``n^4`` block used for bond ``k``.  Each
    ``G^k`` solves ``min ||L^k G R^k - S^k||_F`` with ``L^k = TL^k TC^k`` and
    ``R^k = TC^{k+1} TR^{k+1}``.  The bond fits leave the overall scale of
    the ring free, so a final scalar is fitted on the same blocks.
    """
    d, n = oracle.d, oracle.n
    if d < 4:
        raise ValueError("gauge fixing needs d >= 4")
    gauges, residuals, blocks = [], [], []
    for k in range(1, d + 1):
        dims = tuple(cyclic(k - 1 + j, d) for j in range(4))
        S = sample_block(oracle, dims, x_refs[k - 1]).reshape(n * n, n * n)
        if not np.all(np.isfinite(S)):
            raise FloatingPointError(f"non-finite oracle values in gauge block {k}")
        L, R = _gauge_pieces(triples[k - 1], triples[k % d])
        A = np.kron(R.T, L)
        g = ridge_ls(A, S.ravel(order="F"), 0.0)
        G = g.reshape(L.shape[1], R.shape[0], order="F")
        den = np.linalg.norm(S)
        residuals.append(float(np.linalg.norm(L @ G @ R - S) / den) if den else 0.0)
        gauges.append(G)
        blocks.append((dims, x_refs[k - 1]))
    cores = [np.einsum("ivj,jl->ivl", t.TC, G) for t, G in zip(triples, gauges)]
    ring = TensorRing(cores)

    X = np.vstack([_block_points(dims, x_ref, n) for dims, x_ref in blocks])
    f = oracle(X)
    g = eval_batch(ring, X)
    gg = float(g @ g)
    scale = float(g @ f) / gg if gg > 0 else 1.0
    if scale != 0.0 and np.isfinite(scale):
        per_core = abs(scale) ** (1.0 / d)
        ring.cores = [c * per_core for c in ring.cores]
        if scale < 0:
            ring.cores[0] = -ring.cores[0]
    return GaugeFit(ring, gauges, residuals, scale)


def _block_points(dims, x_ref, n):
    m = len(dims)
    grid = np.indices((n,) * m).reshape(m, -1).T + 1
    X = np.tile(np.asarray(x_ref, dtype=np.int64), (grid.shape[0], 1))
    X[:, [j - 1 for j in dims]] = grid
    return X


def reference_points(oracle, rng, z_mode: str = "shared", envs=None) -> tuple:
    """Reference points for the ``n^3`` splits and the ``n^4`` gauge blocks.

    ``shared`` freezes every block at one random point, which keeps the
    boundary vectors seen by neighbouring blocks identical; ``independent``
    draws fresh points per block; ``envi`` takes the first element of each
    ``Omega_k^envi``.
    """
    d, n = oracle.d, oracle.n
    if z_mode == "shared":
        z = rng.integers(1, n + 1, size=d)
        return [z] * d, [z] * d
    if z_mode == "independent":
        split = [rng.integers(1, n + 1, size=d) for _ in range(d)]
        gauge = [rng.integers(1, n + 1, size=d) for _ in range(d)]
        return split, gauge
    if z_mode == "envi":
        if envs is None:
            raise ValueError("z_mode='envi' needs the environment sets")
        split = []
        for env in envs:
            z = np.ones(d, dtype=np.int64)
            z[[j - 1 for j in env.dims]] = env.values[0]
            split.append(z)
        return split, split
    raise ValueError(f"unknown z_mode {z_mode!r}; expected one of {Z_MODES}")


def initialize_ring(oracle, r: int, rng=None, z_mode: str = "shared", envs=None) -> GaugeFit:
    if oracle.d < 4:
        raise ValueError("initialization needs d >= 4")
    rng = np.random.default_rng(rng)
    split_refs, gauge_refs = reference_points(oracle, rng, z_mode, envs)
    triples = [local_tt_svd(oracle, k, r, split_refs[k - 1]) for k in range(1, oracle.d + 1)]
    fit = gauge_fix(oracle, triples, gauge_refs)
    log.debug("gauge residuals: %s", np.round(fit.residuals, 8))
    return fit
