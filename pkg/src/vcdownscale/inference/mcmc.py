"""Adaptive random-walk Metropolis for the posterior of the response model.

The chain runs on the unconstrained parameters of :class:`ParamLayout`
(mean coefficients included).  During burn-in the proposal is a diagonal
Gaussian whose per-coordinate scales follow the running posterior standard
deviations, and a global log-scale is tuned by Robbins-Monro toward the
target acceptance rate.  Adaptation stops at the end of burn-in, so the
retained draws come from a fixed Metropolis kernel.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

import numpy as np

from ..covariance import TaperSpec
from ..exceptions import ConfigurationError, DiagnosticsError, NumericalError
from .likelihood import check_covariates, loglik
from .model import ModelSpec, ParamLayout, ParamVector
from .optimize import default_init
from .priors import PriorSpec, log_prior

_U_LIMIT = 50.0


@dataclass(frozen=True)
class ChainConfig:
    n_draws: int = 20000
    burn_in: int = 5000
    target_accept: float = 0.234
    seed: int = 0
    init: ParamVector | None = None
    proposal_sd: float = 0.1
    adapt: bool = True
    adapt_start: int = 500
    window: int = 1000
    fixed: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class PosteriorDraws:
    names: tuple[str, ...]
    draws: np.ndarray              # (n_draws, n_params), natural scale
    acceptance_rate: float
    ess: np.ndarray
    model: ModelSpec
    taper: TaperSpec | None = None
    log_post: np.ndarray | None = None
    elapsed_seconds: float = 0.0
    fixed: Mapping[str, float] = field(default_factory=dict)
    method: str = "mcmc"

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]

    def layout(self) -> ParamLayout:
        return ParamLayout(self.model, with_beta=True)

    def params(self, i: int) -> ParamVector:
        return self.layout().from_natural(self.draws[i])

    def mean_params(self) -> ParamVector:
        return self.layout().from_natural(self.draws.mean(axis=0))


class SummaryRow(NamedTuple):
    name: str
    mean: float
    lower: float
    upper: float


def effective_sample_size(x) -> float:
    """ESS from Geyer's initial monotone positive sequence of autocorrelations."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    xc = x - x.mean()
    var = xc @ xc / n
    if n < 4 or var <= 0:
        return float(n)
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, m)
    acf = np.fft.irfft(f * np.conj(f), m)[:n] / (n * var)
    pairs = acf[: 2 * ((n - 1) // 2)].reshape(-1, 2).sum(axis=1)
    total = 0.0
    prev = np.inf
    for g in pairs:
        if g <= 0:
            break
        g = min(g, prev)
        total += g
        prev = g
    tau = max(2.0 * total - 1.0, 1.0 / n)
    return float(max(1.0, n / tau))


def mcmc_fit(model: ModelSpec, Y, X=None, prior: PriorSpec | None = None,
             taper: TaperSpec | None = None, config: ChainConfig | None = None) -> PosteriorDraws:
    """Sample the posterior ``likelihood(backend) x prior``.

    Parameters named in ``config.fixed`` (layout names such as ``"tau_sq"``)
    are held at the given values.  Raises :class:`DiagnosticsError` if any
    window of ``config.window`` iterations produces no move.
    """
    prior = prior or PriorSpec()
    config = config or ChainConfig()
    if config.n_draws < 1 or config.burn_in < 0:
        raise ConfigurationError("n_draws must be >= 1 and burn_in >= 0")
    start = time.perf_counter()
    Xc = check_covariates(model, X, Y.T, Y.n)
    layout = ParamLayout(model, with_beta=True)
    unknown = set(config.fixed) - set(layout.names)
    if unknown:
        raise ConfigurationError(f"cannot fix unknown parameters {sorted(unknown)}")

    init = config.init or default_init(model, Y, Xc)
    nat = layout.natural(init)
    for name, value in config.fixed.items():
        nat[layout.names.index(name)] = value
    u = layout.to_unconstrained(layout.from_natural(nat))
    free = np.array([name not in config.fixed for name in layout.names])
    d = int(free.sum())
    if d == 0:
        raise ConfigurationError("every parameter is fixed")

    def log_target(v):
        if np.any(np.abs(v) > _U_LIMIT):
            return -np.inf
        try:
            p = layout.from_unconstrained(v)
            lp = log_prior(prior, p)
            if not np.isfinite(lp):
                return -np.inf
            val = loglik(model, p, Y, Xc, taper) + lp + _free_jacobian(layout, v, free)
        except (NumericalError, ConfigurationError, OverflowError, ValueError):
            return -np.inf
        return val if np.isfinite(val) else -np.inf

    rng = np.random.default_rng(config.seed)
    base = np.broadcast_to(np.asarray(config.proposal_sd, dtype=float), (d,)).copy()
    log_scale = 0.0
    mean = np.zeros(d)
    m2 = np.zeros(d)
    empirical = False

    cur = log_target(u)
    if not np.isfinite(cur):
        raise NumericalError("log posterior is not finite at the initial state")
    total = config.burn_in + config.n_draws
    out = np.empty((config.n_draws, len(layout)))
    lp_out = np.empty(config.n_draws)
    moves_window = 0
    moves_kept = 0

    for it in range(total):
        step = math.exp(log_scale) * base * rng.standard_normal(d)
        prop = u.copy()
        prop[free] += step
        new = log_target(prop)
        log_ratio = new - cur
        accept_prob = 1.0 if log_ratio >= 0 else math.exp(log_ratio) if np.isfinite(log_ratio) else 0.0
        accepted = rng.random() < accept_prob
        if accepted and np.any(prop != u):
            u, cur = prop, new
            moves_window += 1
            if it >= config.burn_in:
                moves_kept += 1

        if it < config.burn_in and config.adapt:
            k = it + 1
            x = u[free]
            delta = x - mean
            mean += delta / k
            m2 += delta * (x - mean)
            log_scale += (accept_prob - config.target_accept) / k ** 0.6
            if k == config.adapt_start and np.all(m2 > 0):
                empirical = True
                log_scale = math.log(2.38 / math.sqrt(d))
            if empirical:
                base = np.sqrt(m2 / k) + 1e-12

        if (it + 1) % config.window == 0:
            if moves_window == 0:
                raise DiagnosticsError(
                    f"no accepted moves in iterations {it + 2 - config.window}..{it + 1}"
                )
            moves_window = 0

        if it >= config.burn_in:
            j = it - config.burn_in
            out[j] = layout.natural_from_unconstrained(u)
            lp_out[j] = cur

    ess = np.array([effective_sample_size(out[:, i]) for i in range(out.shape[1])])
    return PosteriorDraws(
        layout.names, out, moves_kept / config.n_draws, ess, model, taper, lp_out,
        time.perf_counter() - start, dict(config.fixed),
    )


def _free_jacobian(layout: ParamLayout, v, free) -> float:
    total = 0.0
    for i, name in enumerate(layout.names):
        if not free[i] or name.startswith("beta"):
            continue
        if name == "rho_ar":
            total += 2.0 * (math.log(2.0) - np.logaddexp(v[i], -v[i]))
        else:
            total += v[i]
    return total


def posterior_summary(draws: PosteriorDraws, level: float = 0.95) -> list[SummaryRow]:
    """Mean and central ``level`` interval of every parameter.

    Quantiles use linear interpolation between order statistics.
    """
    if draws.n_draws < 100:
        raise ConfigurationError(f"need at least 100 draws, got {draws.n_draws}")
    if not 0 < level < 1:
        raise ConfigurationError("level must lie in (0, 1)")
    lo, hi = (1 - level) / 2, (1 + level) / 2
    q = np.quantile(draws.draws, [lo, hi], axis=0, method="linear")
    mean = draws.draws.mean(axis=0)
    return [SummaryRow(n, float(m), float(a), float(b))
            for n, m, a, b in zip(draws.names, mean, q[0], q[1])]
