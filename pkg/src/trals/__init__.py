"""Tensor-ring approximation of black-box functions from O(d) sampled entries."""
from .als import AlsConfig, NumericalFailure, RunReport, als_sweep, coefficient_batch, run, solve_core
from .diagnostics import alpha_ratio, condition_kappa, rank1_ratio, segment_product
from .initializer import initialize_ring
from .linalg import RankDeficiencyWarning, ridge_ls, rrqr_select, truncated_svd
from .oracle import BlackBox, ising_oracle, pde_oracle, synthetic_tr_oracle, toy_oracle
from .ring import (TensorRing, error_E, eval_batch, eval_tr, full_contract, gibbs_chain_ring,
                   load_ring, random_ring, save_ring)
from .skeleton import assemble_sample_set, build_all_envs
from .tensor import SkeletonSet, mod_index, reshape_group, unreshape_group

__version__ = "0.1.0"

__all__ = [
    "AlsConfig", "BlackBox", "NumericalFailure", "RankDeficiencyWarning", "RunReport",
    "SkeletonSet", "TensorRing", "alpha_ratio", "als_sweep", "assemble_sample_set",
    "build_all_envs", "coefficient_batch", "condition_kappa", "error_E", "eval_batch",
    "eval_tr", "full_contract", "gibbs_chain_ring", "initialize_ring", "ising_oracle",
    "load_ring", "mod_index", "pde_oracle", "random_ring", "rank1_ratio", "reshape_group",
    "ridge_ls", "rrqr_select", "run", "save_ring", "segment_product", "solve_core",
    "synthetic_tr_oracle", "toy_oracle", "truncated_svd", "unreshape_group",
]
