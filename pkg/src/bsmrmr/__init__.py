"""Bayesian sparse multivariate regression for mixed responses.

A Gibbs sampler with group- and row-level spike-and-slab selection on the
coefficients and a spike-and-slab graphical prior on the precision matrix
of the latent linear predictors, plus synthetic scenarios, evaluation
metrics, chain diagnostics and a command-line interface.
"""

from .estimator import BSMRMRRegressor, fit_chains
from .gibbs import Prediction, SamplerError, posterior_predict, run_chain
from .metrics import EvaluationReport, evaluate_fit, replicate_study
from .model import (
    GroupStructure,
    Hyperparameters,
    MixedResponseDataset,
    ModelState,
    PosteriorChain,
)
from .simulate import SimulationScenario, generate_dataset

__version__ = "0.1.0"

__all__ = [
    "BSMRMRRegressor",
    "EvaluationReport",
    "GroupStructure",
    "Hyperparameters",
    "MixedResponseDataset",
    "ModelState",
    "PosteriorChain",
    "Prediction",
    "SamplerError",
    "SimulationScenario",
    "evaluate_fit",
    "fit_chains",
    "generate_dataset",
    "posterior_predict",
    "replicate_study",
    "run_chain",
]
