"""Conditional-Gaussian prediction of the response at fine locations.

Plug-in prediction (from a :class:`FitResult`) is universal kriging: the
conditional mean and variance of a new response given the training data,
plus the variance contributed by estimating the mean coefficients by GLS.
Posterior prediction (from :class:`PosteriorDraws`) averages the
conditional Gaussians of a thinned set of draws; interval bounds are the
quantiles of that mixture.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import linalg
from scipy.special import ndtr, ndtri

from .covariance import TaperSpec, cov_matrix, taper_eval
from .exceptions import ConfigurationError, DataError, DimensionError, NumericalError
from .grid import SpatialDomain, nearest_indices
from .inference.likelihood import CovarianceStructure, check_covariates, design_matrix
from .inference.mcmc import PosteriorDraws
from .inference.model import ModelSpec, ParamVector
from .inference.optimize import FitResult
from .simulate import SpaceTimeField


@dataclass(frozen=True, eq=False)
class PredictionResult:
    """Predictive mean and interval per (target time, target location)."""

    times: np.ndarray
    locations: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    scale: str = "model"
    sd: np.ndarray | None = None
    loc_index: np.ndarray | None = None
    domain: SpatialDomain | None = None

    def __post_init__(self):
        if self.scale not in ("model", "physical"):
            raise ConfigurationError(f"unknown scale {self.scale!r}")
        if not (np.all(self.lower <= self.mean) and np.all(self.mean <= self.upper)):
            raise NumericalError("prediction interval does not bracket the mean")


def _spatial_cross(domain: SpatialDomain, kernel, idx, taper: TaperSpec | None) -> np.ndarray:
    s = cov_matrix(domain, kernel)[:, idx]
    if taper is not None:
        s = s * taper_eval(taper, domain.distances()[:, idx])
    return s


def _kernels_and_weights(model: ModelSpec, params: ParamVector, X_o, X_t):
    """Varying-coefficient kernels with training/target covariates (None for the intercept)."""
    out = []
    if model.varying_intercept:
        out.append((params.theta0, None, None))
    if model.varying_slopes:
        out += [(k, X_o[:, :, j], X_t[:, :, j]) for j, k in enumerate(params.theta1)]
    return out


def _conditional(model, params, Y, X_o, times_t, idx, X_t, taper, mean_uncertainty):
    """Mean and variance of new responses at ``times_t x idx`` given training ``Y``."""
    domain = Y.domain
    struct = CovarianceStructure(model, params, domain, Y.times, X_o, taper)
    T_o, n, T_t, m = Y.T, Y.n, len(times_t), len(idx)
    temporal = params.temporal(model)
    A = temporal.correlation(Y.times, times_t)
    F_o = design_matrix(model, X_o, T_o, n)
    F_t = design_matrix(model, X_t, T_t, m)
    beta = params.beta
    resid = Y.values.ravel() - F_o @ beta
    alpha = struct.solve(resid).reshape(T_o, n)
    G = struct.solve(F_o) if mean_uncertainty else None

    prior_var = np.full((T_t, m), params.tau_sq)
    mean_lat = np.zeros((T_t, m))
    reduction = np.zeros((T_t, m))
    FtK = np.zeros((T_t, m, model.n_fixed))

    terms = _kernels_and_weights(model, params, X_o, X_t)
    if struct.kind == "rotated":
        if terms:
            S = _spatial_cross(domain, terms[0][0], idx, taper)  # intercept only on this path
            prior_var += terms[0][0].variance
            mean_lat = A.T @ (alpha @ S)
            C = A if struct.P is None else struct.P.T @ A
            for b in np.unique(struct.block_of):
                rows = np.flatnonzero(struct.block_of == b)
                coef = C[rows] ** 2
                if not np.any(coef):
                    continue
                q = np.sum(S * struct.factors[b].solve(S), axis=0)
                reduction += coef.sum(axis=0)[:, None] * q[None, :]
            if G is not None:
                G3 = G.reshape(T_o, n, -1)
                FtK = np.einsum("tj,tnp,nm->jmp", A, G3, S)
    else:
        K = np.zeros((T_o, n, T_t, m))
        for k, wo, wt in terms:
            S = _spatial_cross(domain, k, idx, taper)
            block = A[:, None, :, None] * S[None, :, None, :]
            if wo is not None:
                block = block * wo[:, :, None, None] * wt[None, None, :, :]
                prior_var += k.variance * wt ** 2
            else:
                prior_var += k.variance
            K += block
        K = K.reshape(T_o * n, T_t * m)
        SK = struct.solve(K)
        mean_lat = (K.T @ alpha.ravel()).reshape(T_t, m)
        reduction = np.sum(K * SK, axis=0).reshape(T_t, m)
        if G is not None:
            FtK = (K.T @ G).reshape(T_t, m, -1)

    mean = (F_t @ beta).reshape(T_t, m) + mean_lat
    var = prior_var - reduction
    if G is not None:
        H = F_o.T @ G
        u = F_t.reshape(T_t, m, -1) - FtK
        try:
            cf = linalg.cho_factor(H, lower=True)
        except linalg.LinAlgError as exc:
            raise NumericalError("singular GLS precision") from exc
        uh = linalg.cho_solve(cf, u.reshape(-1, model.n_fixed).T).T.reshape(u.shape)
        var = var + np.sum(u * uh, axis=2)
    return mean, np.maximum(var, 0.0)


def _targets(Y, target_times, target_locations):
    times_t = np.atleast_1d(np.asarray(target_times, dtype=np.int64))
    if target_locations is None:
        idx = np.arange(Y.n)
    else:
        idx = np.atleast_1d(np.asarray(target_locations, dtype=np.int64))
        if idx.min() < 0 or idx.max() >= Y.n:
            raise DimensionError("target locations outside the fine domain")
    return times_t, idx


def _mixture_quantiles(mu, sd, probs, iters: int = 80):
    """Quantiles of equally weighted normal mixtures; ``mu``/``sd`` have the draws on axis 0."""
    lo = np.min(mu - 10 * sd, axis=0)
    hi = np.max(mu + 10 * sd, axis=0)
    out = []
    for p in probs:
        a, b = lo.copy(), hi.copy()
        for _ in range(iters):
            mid = 0.5 * (a + b)
            cdf = np.mean(ndtr((mid[None] - mu) / sd), axis=0)
            below = cdf < p
            a = np.where(below, mid, a)
            b = np.where(below, b, mid)
        out.append(0.5 * (a + b))
    return out


def predict_response(fit, data: SpaceTimeField, target_times, level: float = 0.95,
                     target_locations=None, X_train=None, X_target=None,
                     n_pred_draws: int = 500, mean_uncertainty: bool = True) -> PredictionResult:
    """Predict ``Y`` at ``target_times x target_locations`` of the fine domain.

    Parameters
    ----------
    fit : FitResult or PosteriorDraws
    data : SpaceTimeField
        Training response the fit was computed from.
    level : float
        Central probability of the predictive interval.
    X_train, X_target : array, optional
        Fine-point covariates ``(T, n, q)`` for training and target periods.
    mean_uncertainty : bool
        Plug-in only: add the GLS mean-estimation variance (universal kriging).
    """
    if not 0 < level < 1:
        raise ConfigurationError("level must lie in (0, 1)")
    times_t, idx = _targets(data, target_times, target_locations)
    model = fit.model
    X_o = check_covariates(model, X_train, data.T, data.n)
    X_t = None
    if model.q:
        X_t = np.asarray(X_target, dtype=float) if X_target is not None else None
        if X_t is not None and X_t.ndim >= 2 and X_t.shape[1] == data.n and len(idx) != data.n:
            X_t = X_t[:, idx]
        X_t = check_covariates(model, X_t, len(times_t), len(idx))
    z = float(ndtri(0.5 + level / 2))
    locs = data.domain.locations[idx]

    if isinstance(fit, FitResult):
        mean, var = _conditional(model, fit.estimates, data, X_o, times_t, idx, X_t,
                                 fit.taper, mean_uncertainty)
        sd = np.sqrt(var)
        return PredictionResult(times_t, locs, mean, mean - z * sd, mean + z * sd, level,
                                "model", sd, idx, data.domain)

    if not isinstance(fit, PosteriorDraws):
        raise ConfigurationError("fit must be a FitResult or PosteriorDraws")
    k = min(n_pred_draws, fit.n_draws)
    picks = np.unique(np.linspace(0, fit.n_draws - 1, k).round().astype(int))
    mus, sds = [], []
    for i in picks:
        mu, v = _conditional(model, fit.params(i), data, X_o, times_t, idx, X_t, fit.taper, False)
        mus.append(mu)
        sds.append(np.sqrt(np.maximum(v, 1e-300)))
    mus, sds = np.array(mus), np.array(sds)
    mean = mus.mean(axis=0)
    lower, upper = _mixture_quantiles(mus, sds, [(1 - level) / 2, (1 + level) / 2])
    lower = np.minimum(lower, mean)
    upper = np.maximum(upper, mean)
    sd = np.sqrt(np.maximum(np.mean(sds ** 2 + mus ** 2, axis=0) - mean ** 2, 0.0))
    return PredictionResult(times_t, locs, mean, lower, upper, level, "model", sd, idx, data.domain)


def leave_one_period_out(fit, data: SpaceTimeField, level: float = 0.95, X_train=None,
                         n_pred_draws: int = 500) -> PredictionResult:
    """Predict every training period from the remaining ones.

    Used for in-sample scores: a period's own observations are never used to
    predict it, so the scores are comparable with out-of-sample forecasts.
    """
    if data.T < 2:
        raise ConfigurationError("need at least two periods")
    X_o = check_covariates(fit.model, X_train, data.T, data.n)
    parts = []
    for t in range(data.T):
        keep = np.r_[0:t, t + 1:data.T]
        sub = data.take_times(keep)
        xo = None if X_o is None else X_o[keep]
        xt = None if X_o is None else X_o[t:t + 1]
        parts.append(predict_response(fit, sub, data.times[t:t + 1], level, None, xo, xt,
                                      n_pred_draws))
    first = parts[0]
    stack = lambda name: np.concatenate([getattr(p, name) for p in parts], axis=0)  # noqa: E731
    return PredictionResult(data.times.copy(), first.locations, stack("mean"), stack("lower"),
                            stack("upper"), level, "model", stack("sd"), first.loc_index,
                            first.domain)


def add_offset(pred: PredictionResult, offset) -> PredictionResult:
    """Shift mean and bounds by ``offset`` (e.g. ``C_t(s(w))`` to recover ``C_t(w)``)."""
    if pred.scale != "model":
        raise ConfigurationError("offsets apply on the model scale")
    off = np.broadcast_to(np.asarray(offset, dtype=float), pred.mean.shape)
    return replace(pred, mean=pred.mean + off, lower=pred.lower + off, upper=pred.upper + off)


def back_transform(pred: PredictionResult) -> PredictionResult:
    """Map mean and bounds through ``exp`` (quantiles are equivariant under it)."""
    if pred.scale == "physical":
        raise ConfigurationError("prediction is already on the physical scale")
    return replace(pred, mean=np.exp(pred.mean), lower=np.exp(pred.lower),
                   upper=np.exp(pred.upper), sd=None, scale="physical")


@dataclass(frozen=True, eq=False)
class StationPairs:
    time: np.ndarray
    station: np.ndarray
    node: np.ndarray
    observed: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    n_dropped: int
    n_outside: int


def evaluate_at_stations(pred: PredictionResult, coords, observed) -> StationPairs:
    """Pair station observations with the prediction at the nearest fine node.

    ``observed`` has shape ``(len(pred.times), n_stations)``; NaN entries are
    dropped and counted.  Stations outside the fine domain's extent are still
    matched (to boundary nodes) and reported through ``n_outside``.
    """
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    if coords.shape[0] == 0:
        raise ConfigurationError("empty station list")
    observed = np.asarray(observed, dtype=float)
    if observed.ndim == 1:
        observed = observed[None, :]
    if observed.shape != (len(pred.times), coords.shape[0]):
        raise DimensionError(f"observations {observed.shape} vs "
                             f"{(len(pred.times), coords.shape[0])} (times, stations)")
    node = nearest_indices(pred.locations, coords)
    n_outside = 0
    if pred.domain is not None:
        n_outside = int(np.sum(~pred.domain.contains(coords)))
        if n_outside:
            warnings.warn(f"{n_outside} station(s) outside the fine domain", stacklevel=2)
    ti, si = np.meshgrid(np.arange(len(pred.times)), np.arange(coords.shape[0]), indexing="ij")
    ti, si = ti.ravel(), si.ravel()
    obs = observed[ti, si]
    ok = ~np.isnan(obs)
    ti, si, obs = ti[ok], si[ok], obs[ok]
    nd = node[si]
    return StationPairs(pred.times[ti], si, nd, obs, pred.mean[ti, nd], pred.lower[ti, nd],
                        pred.upper[ti, nd], int((~ok).sum()), n_outside)


def write_predictions_csv(pred: PredictionResult, path) -> None:
    """Rows ``time,x,y,mean,lower,upper,scale`` in (time, location) order."""
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "x", "y", "mean", "lower", "upper", "scale"])
        for i, t in enumerate(pred.times):
            for k, (x, y) in enumerate(pred.locations):
                w.writerow([int(t), repr(float(x)), repr(float(y)), repr(float(pred.mean[i, k])),
                            repr(float(pred.lower[i, k])), repr(float(pred.upper[i, k])),
                            pred.scale])


def read_predictions_csv(path, level: float = 0.95) -> PredictionResult:
    """Inverse of :func:`write_predictions_csv` (``sd`` is not stored)."""
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["time", "x", "y", "mean", "lower", "upper", "scale"]:
        raise DataError(f"{path}: expected header time,x,y,mean,lower,upper,scale")
    body = rows[1:]
    if not body:
        raise DataError(f"{path}: no predictions")
    scales = {r[6] for r in body}
    if len(scales) != 1:
        raise DataError(f"{path}: mixed scales {sorted(scales)}")
    times = sorted({int(r[0]) for r in body})
    pts = sorted({(float(r[1]), float(r[2])) for r in body}, key=lambda p: (p[1], p[0]))
    tpos = {t: i for i, t in enumerate(times)}
    ppos = {p: i for i, p in enumerate(pts)}
    out = np.full((3, len(times), len(pts)), np.nan)
    for lineno, r in enumerate(body, start=2):
        i, k = tpos[int(r[0])], ppos[(float(r[1]), float(r[2]))]
        out[:, i, k] = [float(r[3]), float(r[4]), float(r[5])]
    if np.isnan(out).any():
        raise DataError(f"{path}: predictions do not cover every (time, location)")
    locs = np.array(pts)
    xs, ys = np.unique(locs[:, 0]), np.unique(locs[:, 1])
    domain = None
    if len(xs) * len(ys) == len(pts) and len(xs) > 1 and len(ys) > 1:
        dx, dy = float(np.diff(xs).mean()), float(np.diff(ys).mean())
        domain = SpatialDomain(locs, (dx, dy), (len(xs), len(ys)),
                               (xs[0] - dx / 2, xs[-1] + dx / 2, ys[0] - dy / 2, ys[-1] + dy / 2))
    return PredictionResult(np.array(times), locs, out[0], out[1], out[2], level, scales.pop(),
                            None, None, domain)
