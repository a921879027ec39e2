"""Small dense kernels: truncated SVD, greedy RRQR column selection, ridge LS."""
from __future__ import annotations

import warnings

import numpy as np

# relative gap under which two pivot candidates count as tied
PIVOT_TIE_RTOL = 1e-12


class RankDeficiencyWarning(RuntimeWarning):
    pass


def _fix_signs(U, Vt):
    # largest-magnitude entry of each left singular vector is made positive
    if U.size == 0:
        return U, Vt
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, Vt * signs[:, None]


def truncated_svd(M, r: int):
    """Best rank-``r`` factorization ``M ~ U @ diag(s) @ V.T``.

    Keeps ``min(r, min(M.shape))`` triplets, so asking for more than the full
    rank just returns the full SVD.  Signs are fixed so that each column of
    ``U`` has its largest-magnitude entry positive.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    M = np.asarray(M, dtype=float)
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    k = min(r, s.size)
    U, Vt = _fix_signs(U[:, :k], Vt[:k])
    return U, s[:k], Vt.T


def rrqr_select(M, s: int) -> np.ndarray:
    """Pick ``min(s, ncols)`` spanning columns by greedy column-pivoted QR.

    At each step the column with the largest residual norm (after projecting
    out the columns already chosen) is taken; ties within a relative
    ``PIVOT_TIE_RTOL`` go to the lowest column index.  Returns 0-based column
    indices in pivot order.
    """
    M = np.array(M, dtype=float)
    m, ncols = M.shape
    k = min(s, ncols)
    chosen = []
    available = np.ones(ncols, dtype=bool)
    R = M.copy()
    norms = np.sum(R * R, axis=0)
    for _ in range(k):
        masked = np.where(available, norms, -np.inf)
        top = masked.max()
        ties = np.flatnonzero(masked >= top - PIVOT_TIE_RTOL * abs(top))
        j = int(ties[0])
        chosen.append(j)
        available[j] = False
        col = R[:, j]
        nrm = np.linalg.norm(col)
        if nrm > 0:
            q = col / nrm
            # two Gram-Schmidt passes keep the residuals orthogonal to q
            for _ in range(2):
                R -= np.outer(q, q @ R)
            norms = np.sum(R * R, axis=0)
    return np.asarray(chosen, dtype=np.int64)


def ridge_ls(A, b, lam: float):
    """Solve ``min ||A h - b||^2 + lam * sigma * ||h||^2`` with ``sigma = ||A||_2^2``.

    ``sigma`` is the top singular value of the Hessian ``A^T A``, which makes
    ``lam`` scale free.  ``b`` may be a vector or a matrix of right-hand sides.
    With ``lam == 0`` the minimum-norm least-squares solution is returned and
    a :class:`RankDeficiencyWarning` is issued if ``A`` lacks full column rank.
    """
    if lam < 0:
        raise ValueError("lam must be >= 0")
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    U, sv, Vt = np.linalg.svd(A, full_matrices=False)
    if sv.size == 0 or sv[0] == 0.0:
        return np.zeros((A.shape[1],) + b.shape[1:])
    Utb = U.T @ b
    if lam > 0:
        shift = lam * sv[0] ** 2
        filt = sv / (sv ** 2 + shift)
    else:
        cutoff = max(A.shape) * np.finfo(float).eps * sv[0]
        keep = sv > cutoff
        if keep.sum() < A.shape[1]:
            warnings.warn(
                f"least-squares design has rank {keep.sum()} < {A.shape[1]}; "
                "returning the minimum-norm solution",
                RankDeficiencyWarning,
                stacklevel=2,
            )
        filt = np.where(keep, 1.0 / np.where(keep, sv, 1.0), 0.0)
    if Utb.ndim == 1:
        return Vt.T @ (filt * Utb)
    return Vt.T @ (filt[:, None] * Utb)


def pinv(M, tol: float = 1e-12) -> np.ndarray:
    """Moore-Penrose pseudo-inverse; singular values below ``tol * s_1`` are dropped."""
    M = np.asarray(M, dtype=float)
    U, sv, Vt = np.linalg.svd(M, full_matrices=False)
    if sv.size == 0 or sv[0] == 0.0:
        return np.zeros(M.T.shape)
    keep = sv > tol * sv[0]
    inv = np.where(keep, 1.0 / np.where(keep, sv, 1.0), 0.0)
    return (Vt.T * inv) @ U.T
