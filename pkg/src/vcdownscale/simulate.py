"""Synthetic coarse and fine fields for the downscaling model.

Coarse (global) field::

    C_t(s) = alpha + beta' X_t(s) + eps_t(s),       eps ~ N(0, zeta_sq) i.i.d.

Fine (regional) field, with ``s`` the coarse point nearest to ``w``::

    C_t(w) = [alpha + a_t(w)] + [beta + b_t(w)]' X_t(s) + eps_t(s) + g_t(w)

where ``a ~ GP(beta0, theta0)``, ``b_j ~ GP(beta1_j, theta1_j)`` and
``g ~ N(0, tau_sq)`` i.i.d.  The same ``eps_t(s)`` realization enters both
fields, so it cancels in the response ``Y = C_t(w) - C_t(s)``.

Random streams
--------------
Every simulation function takes an integer ``seed`` and splits it with
``numpy.random.SeedSequence(seed).spawn(5)`` into the streams
``[eps, intercept, slopes, nugget, covariates]``.  Calling
:func:`simulate_global` and :func:`simulate_regional` with one seed therefore
shares ``eps``.  Replication ``k`` of a scenario with master seed ``m`` uses
``SeedSequence(m, spawn_key=(k,))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .covariance import KernelParams, TemporalStructure, cov_matrix
from ._linalg import DenseCholesky
from .exceptions import ConfigurationError, DimensionError
from .grid import GridPair, GridSpec, SpatialDomain, build_grids

_STREAMS = ("eps", "intercept", "slopes", "nugget", "covariates")


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """Values indexed by (time, location); ``values`` has shape ``(T, n)``.

    ``times`` are integer period indices (1-based for simulated data).
    """

    values: np.ndarray
    domain: SpatialDomain
    times: np.ndarray = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] != self.domain.n:
            raise DimensionError(
                f"field of shape {v.shape} does not match domain of {self.domain.n} points"
            )
        times = np.arange(1, v.shape[0] + 1) if self.times is None else np.asarray(self.times)
        if times.shape != (v.shape[0],):
            raise DimensionError("times must have one entry per row of values")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "times", times.astype(np.int64))

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def take_times(self, idx) -> "SpaceTimeField":
        idx = np.asarray(idx)
        return SpaceTimeField(self.values[idx], self.domain, self.times[idx])


@dataclass(frozen=True)
class GlobalParams:
    alpha: float
    beta: tuple[float, ...] = ()
    zeta_sq: float = 1.0

    def __post_init__(self):
        if not self.zeta_sq > 0:
            raise ConfigurationError("zeta_sq must be positive")
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))

    @property
    def q(self) -> int:
        return len(self.beta)


@dataclass(frozen=True)
class RegionalParams:
    """Parameters of the regional correction terms.

    ``theta0=None`` switches off the varying intercept field; ``theta1`` holds
    one kernel per covariate with a spatially varying slope (may be empty, in
    which case the slope correction is the constant ``beta1``).
    """

    beta0: float
    beta1: tuple[float, ...] = ()
    theta0: KernelParams | None = None
    theta1: tuple[KernelParams, ...] = ()
    tau_sq: float = 1.0
    temporal: TemporalStructure = field(default_factory=TemporalStructure)

    def __post_init__(self):
        if self.tau_sq < 0:
            raise ConfigurationError("tau_sq must be non-negative")
        object.__setattr__(self, "beta1", tuple(float(b) for b in self.beta1))
        object.__setattr__(self, "theta1", tuple(self.theta1))
        if self.theta1 and len(self.theta1) != len(self.beta1):
            raise ConfigurationError("theta1 needs one kernel per slope")


@dataclass(frozen=True)
class ScenarioConfig:
    """A complete simulation scenario."""

    grid: GridSpec
    global_params: GlobalParams
    regional: RegionalParams
    T: int = 12
    train_fraction: float | Fraction = Fraction(5, 6)
    replications: int = 1
    seed: int = 0
    name: str = "custom"
    variant: str = ""
    resolution: str = ""

    def __post_init__(self):
        if not 0 < float(self.train_fraction) < 1:
            raise ConfigurationError("train_fraction must lie in (0, 1)")
        n_train = train_count(self.T, self.train_fraction)
        if not 1 <= n_train < self.T:
            raise ConfigurationError(f"T={self.T} with fraction {self.train_fraction} leaves no test periods")
        if self.regional.beta1 and len(self.regional.beta1) != self.global_params.q:
            raise ConfigurationError("regional slopes must match the number of covariates")

    @property
    def q(self) -> int:
        return self.global_params.q


@dataclass(frozen=True, eq=False)
class SimulatedDataset:
    pair: GridPair
    X: np.ndarray | None          # (T, n_coarse, q)
    coarse: SpaceTimeField        # C_t(s)
    fine: SpaceTimeField          # C_t(w)
    response: SpaceTimeField      # Y_t(w)
    components: dict

    def fine_covariates(self) -> np.ndarray | None:
        """Covariates seen by each fine point, ``X_t(s(w))``, shape ``(T, n_fine, q)``."""
        if self.X is None:
            return None
        return self.X[:, self.pair.map.fine_to_coarse, :]


def _streams(seed) -> dict:
    if seed is None:
        raise ConfigurationError("an explicit seed is required")
    if isinstance(seed, np.random.SeedSequence):
        # spawn() is stateful; rebuild so every call sees the same children
        ss = np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key)
    else:
        ss = np.random.SeedSequence(seed)
    return {name: np.random.default_rng(child) for name, child in zip(_STREAMS, ss.spawn(len(_STREAMS)))}


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise ConfigurationError("an explicit seed is required")
    return np.random.default_rng(seed)


def sample_gp(domain: SpatialDomain, params: KernelParams, temporal: TemporalStructure,
              T: int, rng_seed) -> SpaceTimeField:
    """Zero-mean field with covariance ``R_T ⊗ cov_matrix(domain, params)``.

    AR(1) fields are generated recursively in time, with innovations scaled
    by ``sqrt(1 - rho**2)`` so every period has the kernel's marginal variance.
    """
    rng = _rng(rng_seed)
    chol = DenseCholesky(cov_matrix(domain, params))
    z = rng.standard_normal((T, domain.n))
    draws = z @ chol.L.T
    if temporal.kind == "ar1" and temporal.rho != 0.0:
        rho = temporal.rho
        scale = math.sqrt(1.0 - rho * rho)
        out = np.empty_like(draws)
        out[0] = draws[0]
        for t in range(1, T):
            out[t] = rho * out[t - 1] + scale * draws[t]
        draws = out
    return SpaceTimeField(draws, domain)


def default_covariates(domain: SpatialDomain, T: int, q: int, seed) -> np.ndarray | None:
    """I.i.d. standard normal covariates per (t, s); ``None`` when ``q == 0``."""
    if q == 0:
        return None
    return _streams(seed)["covariates"].standard_normal((T, domain.n, q))


def _check_covariates(X, T, n, q):
    if q == 0:
        if X is not None:
            raise DimensionError("covariates supplied for a model with q = 0")
        return None
    if X is None:
        raise DimensionError(f"q = {q} covariates required")
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[:, :, None]
    if X.shape != (T, n, q):
        raise DimensionError(f"covariates of shape {X.shape}, expected {(T, n, q)}")
    return X


def simulate_global(coarse: SpatialDomain, gp: GlobalParams, X, T: int, seed) -> SpaceTimeField:
    """Coarse field ``alpha + beta' X + eps``."""
    X = _check_covariates(X, T, coarse.n, gp.q)
    eps = _streams(seed)["eps"].normal(0.0, math.sqrt(gp.zeta_sq), (T, coarse.n))
    values = gp.alpha + eps
    if X is not None:
        values = values + X @ np.asarray(gp.beta)
    return SpaceTimeField(values, coarse)


def simulate_regional(pair: GridPair, gp: GlobalParams, rp: RegionalParams, X, T: int, seed):
    """Fine field and its latent components.

    Returns
    -------
    fine : SpaceTimeField
        ``C_t(w)`` on the fine domain.
    components : dict
        ``alpha_r`` (T, n_f), ``beta_r`` (T, n_f, q), ``gamma`` (T, n_f),
        ``eps`` (T, n_c) and ``X_fine`` (T, n_f, q) or None.
    """
    q = gp.q
    X = _check_covariates(X, T, pair.coarse.n, q)
    streams = _streams(seed)
    fine = pair.fine
    f2c = pair.map.fine_to_coarse
    eps = streams["eps"].normal(0.0, math.sqrt(gp.zeta_sq), (T, pair.coarse.n))

    alpha_r = np.full((T, fine.n), float(rp.beta0))
    if rp.theta0 is not None:
        alpha_r += sample_gp(fine, rp.theta0, rp.temporal, T, streams["intercept"]).values

    beta1 = np.asarray(rp.beta1 if rp.beta1 else (0.0,) * q, dtype=float)
    beta_r = np.broadcast_to(beta1, (T, fine.n, q)).copy()
    for j, theta in enumerate(rp.theta1):
        beta_r[:, :, j] += sample_gp(fine, theta, rp.temporal, T, streams["slopes"]).values

    gamma = np.zeros((T, fine.n))
    if rp.tau_sq > 0:
        gamma = streams["nugget"].normal(0.0, math.sqrt(rp.tau_sq), (T, fine.n))

    values = gp.alpha + alpha_r + eps[:, f2c] + gamma
    X_fine = None
    if X is not None:
        X_fine = X[:, f2c, :]
        values = values + np.einsum("tnq,tnq->tn", np.asarray(gp.beta) + beta_r, X_fine)
    components = {"alpha_r": alpha_r, "beta_r": beta_r, "gamma": gamma, "eps": eps, "X_fine": X_fine}
    return SpaceTimeField(values, fine), components


def make_response(c_fine: SpaceTimeField, c_coarse: SpaceTimeField, cmap) -> SpaceTimeField:
    """``Y_t(w) = C_t(w) - C_t(s(w))``."""
    if c_fine.T != c_coarse.T or not np.array_equal(c_fine.times, c_coarse.times):
        raise DimensionError("fine and coarse fields cover different periods")
    f2c = cmap.fine_to_coarse
    if len(f2c) != c_fine.n or f2c.max() >= c_coarse.n:
        raise DimensionError("map does not match the field domains")
    return SpaceTimeField(c_fine.values - c_coarse.values[:, f2c], c_fine.domain, c_fine.times)


def train_count(T: int, fraction) -> int:
    frac = fraction if isinstance(fraction, Fraction) else Fraction(fraction).limit_denominator(10 ** 6)
    return math.floor(T * frac)


def split_train_test(fld: SpaceTimeField, train_fraction):
    """First ``floor(T * fraction)`` periods for training, the rest for testing."""
    k = train_count(fld.T, train_fraction)
    if not 1 <= k < fld.T:
        raise ConfigurationError(f"split of T={fld.T} at fraction {train_fraction} is degenerate")
    return fld.take_times(np.arange(k)), fld.take_times(np.arange(k, fld.T))


def replication_seed(master: int, replication: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master, spawn_key=(int(replication),))


def simulate_scenario(config: ScenarioConfig, replication: int = 0, seed=None) -> SimulatedDataset:
    """Draw one replication of a scenario (deterministic in seed and replication)."""
    ss = replication_seed(config.seed, replication) if seed is None else np.random.SeedSequence(seed)
    pair = build_grids(config.grid)
    T = config.T
    X = default_covariates(pair.coarse, T, config.q, ss)
    coarse = simulate_global(pair.coarse, config.global_params, X, T, ss)
    fine, comps = simulate_regional(pair, config.global_params, config.regional, X, T, ss)
    response = make_response(fine, coarse, pair.map)
    return SimulatedDataset(pair, X, coarse, fine, response, comps)


def with_seed(config: ScenarioConfig, seed: int) -> ScenarioConfig:
    return replace(config, seed=int(seed))
