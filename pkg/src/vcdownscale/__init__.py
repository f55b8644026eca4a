"""Varying-coefficient Gaussian-process emulator for statistical downscaling.

Submodules
----------
grid        coarse and fine lattices and the map between them
covariance  Matérn/exponential kernels, tapering, separable space-time covariances
simulate    synthetic coarse/fine fields and the difference response
inference   exact and tapered likelihoods, maximum likelihood, MCMC
predict     conditional-Gaussian prediction with intervals
metrics     MSE, interval score, timing
harness     configuration, data ingestion, scenario catalog, study runner, CLI
"""

from .covariance import KernelParams, TaperSpec, TemporalStructure
from .exceptions import (
    ConfigurationError, DataError, DiagnosticsError, DimensionError, DomainError,
    NumericalError, VCDownscaleError,
)
from .grid import GridPair, GridSpec, SpatialDomain, build_grids, nearest_in
from .inference import (
    ChainConfig, FitResult, ModelSpec, OptimizerConfig, ParamVector, PosteriorDraws, PriorSpec,
    fit_ml, loglik_exact, loglik_tapered, mcmc_fit,
)
from .metrics import MetricsReport, interval_score, mse, timed
from .predict import PredictionResult, back_transform, evaluate_at_stations, predict_response
from .simulate import ScenarioConfig, SpaceTimeField, simulate_scenario

__version__ = "0.1.0"

__all__ = [
    "ChainConfig", "ConfigurationError", "DataError", "DiagnosticsError", "DimensionError",
    "DomainError", "FitResult", "GridPair", "GridSpec", "KernelParams", "MetricsReport",
    "ModelSpec", "NumericalError", "OptimizerConfig", "ParamVector", "PosteriorDraws",
    "PredictionResult", "PriorSpec", "ScenarioConfig", "SpaceTimeField", "SpatialDomain",
    "TaperSpec", "TemporalStructure", "VCDownscaleError", "back_transform", "build_grids",
    "evaluate_at_stations", "fit_ml", "interval_score", "loglik_exact", "loglik_tapered",
    "mcmc_fit", "mse", "nearest_in", "predict_response", "simulate_scenario", "timed",
]
