"""Likelihoods, maximum likelihood fitting and MCMC for the response model."""

from .likelihood import CovarianceStructure, loglik, loglik_exact, loglik_tapered, profile_loglik
from .mcmc import ChainConfig, PosteriorDraws, effective_sample_size, mcmc_fit, posterior_summary
from .model import ModelSpec, ParamLayout, ParamVector
from .optimize import FitResult, OptimizerConfig, fit_ml
from .priors import PriorSpec, log_prior, pc_prior_logdensity

__all__ = [
    "ChainConfig", "CovarianceStructure", "FitResult", "ModelSpec", "OptimizerConfig",
    "ParamLayout", "ParamVector", "PosteriorDraws", "PriorSpec", "effective_sample_size",
    "fit_ml", "log_prior", "loglik", "loglik_exact", "loglik_tapered", "mcmc_fit",
    "pc_prior_logdensity", "posterior_summary", "profile_loglik",
]
