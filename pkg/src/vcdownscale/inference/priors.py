"""Penalized-complexity priors and the remaining prior components.

* standard deviation: exponential, ``P[sd > sd0] = p``
* range (2-D): ``pi(r) = lam / r**2 * exp(-lam / r)`` with
  ``lam = median * ln 2``, i.e. ``P[r < median] = 1/2``
* AR(1) coefficient, two calibrations:

  ``cor1`` (base model ``rho = 1``, distance ``sqrt(1 - rho)``)
      ``P[rho > u] = a``; requires ``a > sqrt((1 - u) / 2)``.
  ``cor0`` (base model ``rho = 0``, distance ``sqrt(-log(1 - rho**2))``)
      ``P[|rho| > u] = a``.

* mean coefficients: independent ``N(mean, sd**2)``; ``sd = inf`` is flat.
* nugget: Gamma(shape, rate) on the precision ``1 / tau_sq``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import optimize

from ..exceptions import ConfigurationError
from .model import ParamVector

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class PriorSpec:
    range_median: float = 700.0
    sd0: float = 0.32
    sd_prob: float = 0.01
    ar1_kind: str = "cor1"
    ar1_u: float = 0.0
    ar1_a: float = 0.9
    fixed_mean: float = 0.0
    fixed_sd: float = 1000.0
    nugget_shape: float = 1.0
    nugget_rate: float = 5e-5

    def __post_init__(self):
        if not self.range_median > 0 or not self.sd0 > 0:
            raise ConfigurationError("prior scales must be positive")
        if not 0 < self.sd_prob < 1 or not 0 < self.ar1_a < 1:
            raise ConfigurationError("prior probabilities must lie in (0, 1)")
        if self.ar1_kind not in ("cor0", "cor1"):
            raise ConfigurationError(f"unknown AR(1) prior {self.ar1_kind!r}")
        if self.ar1_kind == "cor0" and not 0 < self.ar1_u < 1:
            raise ConfigurationError("cor0 calibration needs 0 < u < 1")
        if self.ar1_kind == "cor1":
            if not -1 < self.ar1_u < 1:
                raise ConfigurationError("cor1 calibration needs -1 < u < 1")
            if self.ar1_a <= math.sqrt((1 - self.ar1_u) / 2):
                raise ConfigurationError("cor1 calibration needs a > sqrt((1 - u) / 2)")
        if not self.fixed_sd > 0:
            raise ConfigurationError("fixed_sd must be positive (inf for a flat prior)")

    @property
    def sd_rate(self) -> float:
        return -math.log(self.sd_prob) / self.sd0

    @property
    def range_rate(self) -> float:
        return self.range_median * math.log(2.0)

    @cached_property
    def ar1_rate(self) -> float:
        u, a = self.ar1_u, self.ar1_a
        if self.ar1_kind == "cor0":
            return -math.log(a) / math.sqrt(-math.log1p(-u * u))
        target = math.sqrt(1.0 - u)

        def gap(theta):
            return -math.expm1(-theta * target) / -math.expm1(-SQRT2 * theta) - a

        hi = 1.0
        while gap(hi) < 0:
            hi *= 2.0
        return optimize.brentq(gap, 1e-12, hi, xtol=1e-14, rtol=1e-14)


def log_sd_prior(prior: PriorSpec, sd: float) -> float:
    if not sd > 0:
        return -math.inf
    lam = prior.sd_rate
    return math.log(lam) - lam * sd


def log_range_prior(prior: PriorSpec, r: float) -> float:
    if not r > 0:
        return -math.inf
    lam = prior.range_rate
    return math.log(lam) - 2.0 * math.log(r) - lam / r


def log_ar1_prior(prior: PriorSpec, rho: float) -> float:
    if not -1 < rho < 1:
        return -math.inf
    theta = prior.ar1_rate
    if prior.ar1_kind == "cor1":
        mu = math.sqrt(1.0 - rho)
        return (math.log(theta) - theta * mu - math.log(-math.expm1(-SQRT2 * theta))
                - math.log(2.0 * mu))
    if rho == 0.0:
        return math.log(theta / 2.0)
    mu = math.sqrt(-math.log1p(-rho * rho))
    return (math.log(theta / 2.0) - theta * mu + math.log(abs(rho))
            - math.log1p(-rho * rho) - math.log(mu))


def pc_prior_logdensity(prior: PriorSpec, params: ParamVector) -> float:
    """Sum of the PC log densities of every kernel range, sd and ``rho_ar``."""
    total = 0.0
    kernels = ([params.theta0] if params.theta0 is not None else []) + list(params.theta1)
    for k in kernels:
        total += log_sd_prior(prior, k.sd) + log_range_prior(prior, k.range)
    if params.rho_ar is not None:
        total += log_ar1_prior(prior, params.rho_ar)
    return total


def log_fixed_prior(prior: PriorSpec, beta) -> float:
    if math.isinf(prior.fixed_sd):
        return 0.0
    z = (np.asarray(beta, dtype=float) - prior.fixed_mean) / prior.fixed_sd
    return float(np.sum(-0.5 * z * z - math.log(prior.fixed_sd) - 0.5 * math.log(2 * math.pi)))


def log_nugget_prior(prior: PriorSpec, tau_sq: float) -> float:
    """Density of ``tau_sq`` implied by a Gamma prior on its precision."""
    if not tau_sq > 0:
        return -math.inf
    a, b = prior.nugget_shape, prior.nugget_rate
    kappa = 1.0 / tau_sq
    return (a * math.log(b) - math.lgamma(a) + (a - 1.0) * math.log(kappa) - b * kappa
            - 2.0 * math.log(tau_sq))


def log_prior(prior: PriorSpec, params: ParamVector, skip=()) -> float:
    """Joint log prior density on the natural scale.

    ``skip`` names components held fixed (``"beta"``, ``"tau_sq"``) whose
    prior is a constant and is left out.
    """
    total = pc_prior_logdensity(prior, params)
    if "beta" not in skip:
        total += log_fixed_prior(prior, params.beta)
    if "tau_sq" not in skip:
        total += log_nugget_prior(prior, params.tau_sq)
    return total
