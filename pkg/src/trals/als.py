"""Alternating least squares on the per-core sample sets.

Core ``k`` is refitted on ``Omega_k`` only.  Because ``Omega_k`` enumerates
dims ``k-1, k, k+1`` in full, the coefficient matrices

    C^{x minus x_k} = H^{k+1}[x_{k+1}] P(z) H^{k-1}[x_{k-1}]

need the long environment product ``P(z) = H^{k+2}[z_{k+2}] ... H^{k-2}[z_{k-2}]``
once per environment element, and the design matrix is shared by all ``n``
slices of ``H^k``.
"""
from __future__ import annotations

import logging
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .initializer import Z_MODES, initialize_ring
from .linalg import ridge_ls
from .ring import (DEFAULT_EVAL_COUNT, TensorRing, chain_product, error_E, eval_batch,
                   random_ring, relative_error, sample_eval_set)
from .skeleton import assemble_sample_set, build_all_envs, skeleton_union, tree_levels
from .tensor import cyclic

log = logging.getLogger(__name__)


class NumericalFailure(RuntimeError):
    """Raised when the iteration produces non-finite cores; carries the partial report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class AlsConfig:
    r: int = 3
    s: int = 4
    lam: float = 1e-9
    passes: int = 1
    max_sweeps: int = 30
    rel_tol: float = 1e-3
    seed: int = 0
    eval_count: int = DEFAULT_EVAL_COUNT
    init: str = "svd"
    z_mode: str = "shared"
    extra_factor: int = 5
    rank_increase: bool = False
    target_r: int | None = None
    variance: float = 1e-8

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if self.r < 1 or self.s < 1 or self.passes < 1:
            raise ValueError("r, s and passes must be >= 1")
        if self.init not in ("svd", "random"):
            raise ValueError(f"init must be 'svd' or 'random', got {self.init!r}")
        if self.z_mode not in Z_MODES:
            raise ValueError(f"z_mode must be one of {Z_MODES}")
        if self.rank_increase and (self.target_r is None or self.target_r <= self.r):
            raise ValueError("rank increase needs target_r > r")
        if self.variance <= 0:
            raise ValueError("variance must be positive")


@dataclass
class CoefficientBatch:
    """Coefficient matrices of core ``k`` over ``Omega_k``.

    ``P[j]`` is the environment product for env element ``j``;
    ``C[a, c, j]`` is ``C^{x minus x_k}`` for ``x_{k-1} = a+1``, ``x_{k+1} = c+1``.
    ``mults`` counts the r x r matrix products spent building them.
    """

    k: int
    P: np.ndarray
    C: np.ndarray
    mults: int

    def design(self) -> np.ndarray:
        # Tr(H C) = <vec H, vec C^T>: one row per (x_{k-1}, x_{k+1}, env)
        n, _, m, rr, rl = self.C.shape
        return np.swapaxes(self.C, -1, -2).reshape(n * n * m, rl * rr)


def coefficient_batch(ring: TensorRing, k: int, sample_set) -> CoefficientBatch:
    d, n = ring.d, ring.n
    if d < 4:
        raise ValueError("coefficient assembly needs d >= 4")
    env = sample_set.env
    m = len(env)
    X = np.ones((m, d), dtype=np.int64)
    X[:, [j - 1 for j in env.dims]] = env.values
    chain = [cyclic(k + 2 + i, d) for i in range(d - 3)]
    P = chain_product(ring, X, chain)
    right = ring.cores[cyclic(k + 1, d) - 1]   # H^{k+1}: (r_k, n, r_{k+1})
    left = ring.cores[cyclic(k - 1, d) - 1]    # H^{k-1}: (r_{k-2}, n, r_{k-1})
    AP = np.einsum("icp,jpq->cjiq", right, P)
    C = np.einsum("cjiq,qat->acjit", AP, left)
    mults = m * (d - 4) + n * m + n * n * m
    return CoefficientBatch(k, P, C, mults)


def _targets(sample_set) -> np.ndarray:
    # rows (x_{k-1}, x_{k+1}, env) to match CoefficientBatch.design, one column per x_k
    v = sample_set.values
    n, m = v.shape[0], v.shape[3]
    return np.transpose(v, (0, 2, 3, 1)).reshape(n * n * m, n)


@dataclass
class CoreSolve:
    core: np.ndarray
    loss_before: float
    loss_after: float
    mults: int


def solve_core(ring: TensorRing, k: int, sample_set, lam: float = 1e-9) -> CoreSolve:
    """Refit core ``k`` on ``Omega_k`` in place.

    The ``n`` slices decouple; they share one design matrix and are solved
    together as a multi right-hand-side ridge problem.
    """
    batch = coefficient_batch(ring, k, sample_set)
    A = batch.design()
    B = _targets(sample_set)
    rl, n, rr = ring.cores[k - 1].shape
    old = ring.cores[k - 1]
    h_old = np.transpose(old, (0, 2, 1)).reshape(rl * rr, n)
    before = float(np.sum((A @ h_old - B) ** 2))
    h = ridge_ls(A, B, lam)
    after = float(np.sum((A @ h - B) ** 2))
    # roundoff floor so exact fits do not trip the check
    floor = 1e-14 * float(np.sum(B * B))
    if lam == 0 and after > before * (1 + 1e-10) + floor:
        warnings.warn(f"core {k}: least-squares update increased the loss", RuntimeWarning)
    core = h.reshape(rl, rr, n).transpose(0, 2, 1).copy()
    ring.cores[k - 1] = core
    return CoreSolve(core, before, after, batch.mults)


def als_sweep(ring: TensorRing, sample_sets, lam: float = 1e-9, union=None):
    """One pass of ``solve_core`` over ``k = 1..d``.

    Returns ``(ring, E_skeleton, mults)`` where ``E_skeleton`` is measured on
    ``union`` (points, values), defaulting to the union of the sample sets.
    """
    mults = 0
    for k in range(1, ring.d + 1):
        mults += solve_core(ring, k, sample_sets[k - 1], lam).mults
    if union is None:
        union = skeleton_union(sample_sets)
    X, f = union
    return ring, relative_error(eval_batch(ring, X), f), mults


def rank_increase(ring: TensorRing, variance: float = 1e-8, rng=None) -> TensorRing:
    """Grow every bond by one: slices become ``[[H, e1], [e2, 1]]`` with Gaussian ``e``."""
    if variance <= 0:
        raise ValueError("variance must be positive")
    rng = np.random.default_rng(rng)
    sd = np.sqrt(variance)
    cores = []
    for c in ring.cores:
        rl, n, rr = c.shape
        new = np.zeros((rl + 1, n, rr + 1))
        new[:rl, :, :rr] = c
        new[:rl, :, rr] = sd * rng.standard_normal((rl, n))
        new[rl, :, :rr] = sd * rng.standard_normal((n, rr))
        new[rl, :, rr] = 1.0
        cores.append(new)
    return TensorRing(cores)


@dataclass
class RunReport:
    oracle: str
    d: int
    n: int
    E: float = float("nan")
    E_skeleton: float = float("nan")
    E_skeleton_init: float = float("nan")
    calls: int = 0
    fraction: float = float("nan")
    sweeps: int = 0
    seconds: float = 0.0
    ranks: tuple = ()
    history: list = field(default_factory=list)
    phase_seconds: dict = field(default_factory=dict)
    phase_calls: dict = field(default_factory=dict)
    mults_per_sweep: list = field(default_factory=list)
    gauge_residuals: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _converged(prev, now, rel_tol) -> bool:
    return (prev - now) / max(prev, np.finfo(float).tiny) < rel_tol


def run(oracle, config: AlsConfig):
    """Sample, initialize and sweep; returns ``(ring, RunReport)``."""
    d, n = oracle.d, oracle.n
    tree_levels(d)
    rng = np.random.default_rng(config.seed)
    report = RunReport(oracle=oracle.name, d=d, n=n)
    t_start = time.perf_counter()

    def mark(phase, t0, calls0):
        report.phase_seconds[phase] = time.perf_counter() - t0
        report.phase_calls[phase] = oracle.calls - calls0

    t0, c0 = time.perf_counter(), oracle.calls
    envs = build_all_envs(oracle, d, config.s, config.passes, rng, config.extra_factor)
    mark("skeleton", t0, c0)

    t0, c0 = time.perf_counter(), oracle.calls
    sample_sets = [assemble_sample_set(oracle, k, envs[k - 1]) for k in range(1, d + 1)]
    union = skeleton_union(sample_sets)
    mark("assemble", t0, c0)

    t0, c0 = time.perf_counter(), oracle.calls
    if config.init == "svd":
        fit = initialize_ring(oracle, config.r, rng, config.z_mode, envs)
        ring = fit.ring
        report.gauge_residuals = list(fit.residuals)
    else:
        ring = random_ring(d, n, config.r, rng)
    mark("init", t0, c0)
    report.calls = oracle.calls
    report.fraction = report.calls / float(n) ** d

    X, f = union
    e_prev = relative_error(eval_batch(ring, X), f)
    report.E_skeleton_init = e_prev
    report.history.append({"sweep": 0, "E_skeleton": e_prev, "rank": config.r})

    t0 = time.perf_counter()
    targets = [config.r]
    if config.rank_increase:
        targets += list(range(config.r + 1, config.target_r + 1))
    for stage, r in enumerate(targets):
        if stage:
            ring = rank_increase(ring, config.variance, rng)
        for _ in range(config.max_sweeps):
            ring, e_now, mults = als_sweep(ring, sample_sets, config.lam, union)
            report.sweeps += 1
            report.mults_per_sweep.append(mults)
            report.history.append({"sweep": report.sweeps, "E_skeleton": e_now, "rank": r})
            if not all(np.all(np.isfinite(c)) for c in ring.cores) or not np.isfinite(e_now):
                report.seconds = time.perf_counter() - t_start
                raise NumericalFailure(f"non-finite cores after sweep {report.sweeps}", report)
            log.debug("sweep %d rank %d E_skeleton %.3e", report.sweeps, r, e_now)
            done = _converged(e_prev, e_now, config.rel_tol)
            e_prev = e_now
            if done:
                break
    report.phase_seconds["als"] = time.perf_counter() - t0
    report.E_skeleton = e_prev
    report.ranks = ring.ranks

    t0 = time.perf_counter()
    eval_seed = int(rng.integers(2 ** 31))
    omega = sample_eval_set(d, n, config.eval_count, eval_seed)
    report.E = error_E(ring, oracle, omega)
    report.phase_seconds["evaluate"] = time.perf_counter() - t0
    report.seconds = time.perf_counter() - t_start
    return ring, report
