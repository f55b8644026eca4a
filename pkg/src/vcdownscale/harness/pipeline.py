"""Glue between configuration and the fit/predict/score functions."""

from __future__ import annotations

import zlib

import numpy as np

from ..covariance import TaperSpec
from ..exceptions import ConfigurationError
from ..inference.mcmc import ChainConfig, mcmc_fit
from ..inference.model import ModelSpec
from ..inference.optimize import OptimizerConfig, fit_ml
from ..inference.priors import PriorSpec
from ..metrics import MetricsReport, score
from ..predict import PredictionResult, back_transform
from .config import RunConfig


def derived_seed(master: int, *coords) -> int:
    """Deterministic 32-bit seed from the master seed and cell coordinates."""
    key = [int(master) & 0xFFFFFFFF] + [zlib.crc32(str(c).encode()) for c in coords]
    return int(np.random.SeedSequence(key).generate_state(1)[0])


def model_for(kind: str, cfg: RunConfig, q: int = 0, kernel=None) -> ModelSpec:
    """Model preset with the kernel family/smoothness from ``cfg`` or the generating kernel."""
    family = cfg.family or (kernel.family if kernel is not None else "matern")
    nu = cfg.nu if cfg.nu is not None else (kernel.nu if kernel is not None else 1.0)
    if kind == "M3" and q == 0:
        raise ConfigurationError("M3 needs covariates")
    if kind in ("M0", "M1", "M2") and q:
        raise ConfigurationError(f"{kind} takes no covariates but the data have {q}")
    return ModelSpec.preset(kind, family, nu, q=max(q, 1))


def taper_for(cfg: RunConfig) -> TaperSpec | None:
    return TaperSpec(cfg.taper_range) if cfg.backend == "tapered" else None


def prior_for(cfg: RunConfig, domain) -> PriorSpec:
    median = cfg.range_median if cfg.range_median is not None else domain.diameter / 2
    return PriorSpec(range_median=median, sd0=cfg.sd0, sd_prob=cfg.sd_prob,
                     ar1_kind=cfg.ar1_prior, ar1_u=cfg.ar1_u, ar1_a=cfg.ar1_a)


def fit_model(model: ModelSpec, Y, X, cfg: RunConfig, seed: int):
    """ML fit or posterior draws, depending on ``cfg.method``."""
    taper = taper_for(cfg)
    if cfg.method == "ml":
        oc = OptimizerConfig(max_evals=cfg.max_evals, restarts=cfg.restarts, seed=seed)
        return fit_ml(model, Y, X, taper, oc)
    chain = ChainConfig(n_draws=cfg.n_draws, burn_in=cfg.burn_in, seed=seed)
    return mcmc_fit(model, Y, X, prior_for(cfg, Y.domain), taper, chain)


def score_prediction(pred: PredictionResult, observed, label: dict, physical: bool = True,
                     elapsed=None) -> list[MetricsReport]:
    """Model-scale report, plus the exp-scale report when ``physical``."""
    obs = np.asarray(observed, dtype=float)
    ok = ~np.isnan(obs)
    reports = [score(obs[ok], pred.mean[ok], pred.lower[ok], pred.upper[ok], pred.level,
                     label, pred.scale, elapsed)]
    if physical and pred.scale == "model":
        phys = back_transform(pred)
        reports.append(score(np.exp(obs[ok]), phys.mean[ok], phys.lower[ok], phys.upper[ok],
                             pred.level, label, "physical", elapsed))
    return reports
