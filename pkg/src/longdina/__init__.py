"""Longitudinal DINA models with covariate-driven latent transitions.

Provides a joint Bayesian MCMC estimator and a bias-corrected three-step
estimator for panel item-response data, a synthetic-data generator, metric
and diagnostic utilities, and a Monte Carlo study harness with a CLI.
"""

from .errors import (
    ConfigurationError,
    DegenerateLikelihoodError,
    DimensionError,
    EmDivergenceError,
    InputError,
    InvariantViolation,
)
from .estimators import JointEstimator, StepwiseEstimator
from .joint import McmcConfig, PosteriorSummary, PriorSpec, fit_joint
from .measurement import (
    ItemParams,
    QMatrix,
    posterior_over_profiles,
    response_prob,
    wave_loglik,
)
from .metrics import aar, mae, mc_error, mc_error_proportion, psrf, rmse
from .profiles import (
    enumerate_profiles,
    ideal_response,
    index_to_profile,
    profile_to_index,
)
from .simulate import Dataset, GenConfig, builtin_qmatrix, gen_dataset, split_rng
from .stepwise import (
    OptimizerConfig,
    StepwiseResult,
    estimate_cep,
    fit_dina_em,
    fit_stepwise,
    fit_structural_corrected,
    map_assign,
    step3_loglik,
)
from .structural import (
    StructuralParams,
    acquisition_prob,
    initial_mastery_prob,
    initial_profile_dist,
    loss_prob,
    transition_matrix,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "DegenerateLikelihoodError",
    "DimensionError",
    "EmDivergenceError",
    "InputError",
    "InvariantViolation",
    "JointEstimator",
    "StepwiseEstimator",
    "McmcConfig",
    "PosteriorSummary",
    "PriorSpec",
    "fit_joint",
    "ItemParams",
    "QMatrix",
    "posterior_over_profiles",
    "response_prob",
    "wave_loglik",
    "aar",
    "mae",
    "mc_error",
    "mc_error_proportion",
    "psrf",
    "rmse",
    "enumerate_profiles",
    "ideal_response",
    "index_to_profile",
    "profile_to_index",
    "Dataset",
    "GenConfig",
    "builtin_qmatrix",
    "gen_dataset",
    "split_rng",
    "OptimizerConfig",
    "StepwiseResult",
    "estimate_cep",
    "fit_dina_em",
    "fit_stepwise",
    "fit_structural_corrected",
    "map_assign",
    "step3_loglik",
    "StructuralParams",
    "acquisition_prob",
    "initial_mastery_prob",
    "initial_profile_dist",
    "loss_prob",
    "transition_matrix",
    "__version__",
]
