"""Maximum likelihood estimation by Nelder-Mead over transformed parameters.

Mean coefficients are profiled out by generalized least squares at every
evaluation, so the simplex only moves covariance parameters (log ranges,
log standard deviations, log nugget variance and ``atanh(rho_ar)``).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from ..covariance import TaperSpec
from ..exceptions import NumericalError
from .likelihood import check_covariates, design_matrix, loglik, profile_loglik
from .model import ModelSpec, ParamLayout, ParamVector

log = logging.getLogger(__name__)

_CLIP = 30.0


@dataclass(frozen=True)
class OptimizerConfig:
    tol: float = 1e-6
    max_evals: int = 2000
    restarts: int = 3
    xtol: float = 1e-4
    jitter_sd: float = 0.5
    initial_step: float = 0.5
    seed: int = 0
    init: ParamVector | None = None


@dataclass(frozen=True)
class FitResult:
    estimates: ParamVector
    loglik: float
    iterations: int
    converged: bool
    elapsed_seconds: float
    method: str
    model: ModelSpec
    taper: TaperSpec | None = None
    jitter: float = 0.0
    extra: dict = field(default_factory=dict)


def default_init(model: ModelSpec, Y, X=None) -> ParamVector:
    """Moment-based starting values: half of the residual variance to each source."""
    y = Y.values.ravel()
    Xc = check_covariates(model, X, Y.T, Y.n)
    F = design_matrix(model, Xc, Y.T, Y.n)
    beta, *_ = np.linalg.lstsq(F, y, rcond=None)
    v = float(np.var(y - F @ beta))
    v = v if v > 0 else 1.0
    share = v / 2 if (model.varying_intercept or model.varying_slopes) else v
    rng0 = Y.domain.diameter / 5.0
    theta0 = model.kernel(rng0, np.sqrt(share)) if model.varying_intercept else None
    theta1 = tuple(model.kernel(rng0, np.sqrt(share / max(1.0, np.mean(Xc[..., j] ** 2))))
                   for j in range(model.q)) if model.varying_slopes else ()
    return ParamVector(float(beta[0]), tuple(beta[1:]), theta0, theta1, share,
                       0.3 if model.ar1 else None)


def _closed_form(model, Y, X, taper, start):
    """OLS and the biased residual variance: exact MLE without random effects."""
    y = Y.values.ravel()
    Xc = check_covariates(model, X, Y.T, Y.n)
    F = design_matrix(model, Xc, Y.T, Y.n)
    beta, *_ = np.linalg.lstsq(F, y, rcond=None)
    resid = y - F @ beta
    tau_sq = float(np.mean(resid ** 2))
    est = ParamVector(float(beta[0]), tuple(beta[1:]), None, (), tau_sq,
                      0.0 if model.ar1 else None)
    ll = loglik(model, est, Y, Xc, taper)
    method = "ml-exact" if taper is None else "ml-tapered"
    return FitResult(est, ll, 1, True, time.perf_counter() - start, method, model, taper)


def fit_ml(model: ModelSpec, Y, X=None, taper: TaperSpec | None = None,
           config: OptimizerConfig | None = None) -> FitResult:
    """Maximize the exact (``taper=None``) or tapered likelihood.

    Runs ``config.restarts`` Nelder-Mead searches, the first from
    ``config.init`` (or moment-based defaults) and the rest from jittered
    copies of the best point so far.  Failure to converge is reported through
    ``FitResult.converged`` rather than raised.
    """
    config = config or OptimizerConfig()
    start = time.perf_counter()
    if not (model.varying_intercept or model.varying_slopes):
        return _closed_form(model, Y, X, taper, start)

    Xc = check_covariates(model, X, Y.T, Y.n)
    layout = ParamLayout(model, with_beta=False)
    init = config.init or default_init(model, Y, Xc)
    x0 = layout.to_unconstrained(init)
    rng = np.random.default_rng(config.seed)
    n_evals = 0

    def objective(u):
        nonlocal n_evals
        n_evals += 1
        u = np.clip(u, -_CLIP, _CLIP)
        try:
            ll, _, _ = profile_loglik(model, layout.from_unconstrained(u), Y, Xc, taper)
        except NumericalError:
            return np.inf
        return -ll if np.isfinite(ll) else np.inf

    best = None
    converged = False
    for attempt in range(max(1, config.restarts)):
        xs = x0 if best is None else best.x + rng.normal(0.0, config.jitter_sd, len(x0))
        simplex = np.vstack([xs] + [xs + config.initial_step * e for e in np.eye(len(xs))])
        res = optimize.minimize(
            objective, xs, method="Nelder-Mead",
            options={"initial_simplex": simplex, "maxfev": config.max_evals,
                     "fatol": config.tol, "xatol": config.xtol},
        )
        log.debug("restart %d: -loglik=%.8g nfev=%d success=%s", attempt, res.fun, res.nfev, res.success)
        converged = converged or (bool(res.success) and np.isfinite(res.fun))
        if best is None or res.fun < best.fun:
            best = res

    u = np.clip(best.x, -_CLIP, _CLIP)
    params = layout.from_unconstrained(u)
    try:
        ll, beta, struct = profile_loglik(model, params, Y, Xc, taper)
    except NumericalError:
        return FitResult(params, -np.inf, n_evals, False, time.perf_counter() - start,
                         "ml-exact" if taper is None else "ml-tapered", model, taper)
    est = params.with_beta(beta)
    return FitResult(
        est, float(ll), n_evals, converged and np.isfinite(ll), time.perf_counter() - start,
        "ml-exact" if taper is None else "ml-tapered", model, taper, struct.jitter,
    )
