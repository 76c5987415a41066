"""Bayesian group factor analysis with structured sparsity."""

from .data import GroupedDataset, assemble_dataset
from .em import EmConfig, FactorMoments, FitReport, e_step, m_step_loading, m_step_shrinkage, prune_factors, run_em
from .errors import BassError, DimensionError, InvalidInputError, NumericError
from .gibbs import Chain, GibbsConfig, run_gibbs, sample_factors, sample_loading_row, sweep
from .gig import gig_logpdf, gig_mean, sample_gig
from .metrics import classify_factors, dsi, mse, predict_block, pve, recovery_rate, ssi
from .model import HyperParams, ModelState, init_state, log_joint, marginal_covariance, marginal_loglik
from .network import EdgeList, consensus_network, observation_covariance, partial_correlation
from .px import PxConfig, apply_rotation, run_px_em, update_rotation
from .sim import GroundTruth, SimSpec, builtin_spec, generate, generate_test

__version__ = "0.1.0"

__all__ = [
    "BassError",
    "Chain",
    "DimensionError",
    "EdgeList",
    "EmConfig",
    "FactorMoments",
    "FitReport",
    "GibbsConfig",
    "GroundTruth",
    "GroupedDataset",
    "HyperParams",
    "InvalidInputError",
    "ModelState",
    "NumericError",
    "PxConfig",
    "SimSpec",
    "apply_rotation",
    "assemble_dataset",
    "builtin_spec",
    "classify_factors",
    "consensus_network",
    "dsi",
    "e_step",
    "generate",
    "generate_test",
    "gig_logpdf",
    "gig_mean",
    "init_state",
    "log_joint",
    "m_step_loading",
    "m_step_shrinkage",
    "marginal_covariance",
    "marginal_loglik",
    "mse",
    "observation_covariance",
    "partial_correlation",
    "predict_block",
    "prune_factors",
    "pve",
    "recovery_rate",
    "run_em",
    "run_gibbs",
    "run_px_em",
    "sample_factors",
    "sample_gig",
    "sample_loading_row",
    "ssi",
    "sweep",
    "update_rotation",
]
