"""Covariance kernels, compact-support tapers and covariance assembly.

Matérn parameterization (no ``sqrt(2 nu)`` scaling)::

    C(d) = sd**2 * 2**(1 - nu) / Gamma(nu) * (d / range)**nu * K_nu(d / range)

so ``nu = 1/2`` is exactly the exponential kernel ``sd**2 * exp(-d / range)``.
Range estimates are therefore not directly comparable with software that
scales the distance by ``sqrt(2 nu)`` or ``sqrt(8 nu)``.

The default taper is Wendland-1, ``(1 - d/rho)**4 * (1 + 4 d/rho)`` for
``d < rho`` and zero beyond, which is positive definite in two dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree
from scipy.special import gammaln, kv

from ._linalg import BandPattern, factorize
from .exceptions import ConfigurationError, DimensionError, DomainError
from .grid import SpatialDomain, pairwise_distances

FAMILIES = ("exponential", "matern")
TAPERS = ("wendland1",)


@dataclass(frozen=True)
class KernelParams:
    """Stationary isotropic covariance parameters.

    ``sd`` is the marginal standard deviation; ``nu`` is ignored by the
    exponential family.
    """

    family: str
    range: float
    sd: float
    nu: float = 0.5

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown kernel family {self.family!r}")
        if not (self.range > 0 and self.sd > 0 and self.nu > 0):
            raise ConfigurationError(f"kernel parameters must be positive: {self}")

    @property
    def variance(self) -> float:
        return self.sd ** 2

    def with_values(self, range: float, sd: float) -> "KernelParams":
        return KernelParams(self.family, float(range), float(sd), self.nu)


@dataclass(frozen=True)
class TaperSpec:
    taper_range: float
    family: str = "wendland1"

    def __post_init__(self):
        if not self.taper_range > 0:
            raise ConfigurationError("taper_range must be positive")
        if self.family not in TAPERS:
            raise ConfigurationError(f"unknown taper family {self.family!r}")


@dataclass(frozen=True)
class TemporalStructure:
    """Temporal factor of a separable covariance: ``iid`` or ``ar1``."""

    kind: str = "iid"
    rho: float = 0.0

    def __post_init__(self):
        if self.kind not in ("iid", "ar1"):
            raise ConfigurationError(f"unknown temporal kind {self.kind!r}")
        if not abs(self.rho) < 1:
            raise DomainError(f"|rho_ar| must be < 1, got {self.rho}")

    def correlation(self, times_a, times_b=None) -> np.ndarray:
        """Correlation matrix between two sets of integer time indices."""
        ta = np.asarray(times_a)
        tb = ta if times_b is None else np.asarray(times_b)
        lag = np.abs(ta[:, None] - tb[None, :])
        if self.kind == "iid" or self.rho == 0.0:
            return (lag == 0).astype(float)
        return self.rho ** lag


def _check_distance(d) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise DomainError("distances must be non-negative")
    return d


def _correlation(params: KernelParams, d: np.ndarray) -> np.ndarray:
    x = d / params.range
    if params.family == "exponential":
        return np.exp(-x)
    nu = params.nu
    out = np.ones_like(x)
    pos = x > 0
    xp = x[pos]
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        lognorm = (1.0 - nu) * np.log(2.0) - gammaln(nu)
        val = np.exp(lognorm + nu * np.log(xp)) * kv(nu, xp)
    val[~np.isfinite(val)] = 0.0
    out[pos] = np.minimum(val, 1.0)
    return out


def correlation_eval(params: KernelParams, d) -> np.ndarray:
    """Unit-variance correlation ``c(d / range)``."""
    return _correlation(params, _check_distance(d))


def kernel_eval(params: KernelParams, d):
    """Covariance ``sd**2 * c(d / range)`` at distance(s) ``d``."""
    d = _check_distance(d)
    out = params.variance * _correlation(params, np.atleast_1d(d))
    return out.reshape(d.shape) if d.ndim else float(out[0])


def taper_eval(spec: TaperSpec, d):
    """Taper weight in ``[0, 1]``; exactly zero for ``d >= taper_range``."""
    d = _check_distance(d)
    r = np.atleast_1d(d) / spec.taper_range
    w = np.where(r < 1.0, (1.0 - r) ** 4 * (1.0 + 4.0 * r), 0.0)
    return w.reshape(d.shape) if d.ndim else float(w[0])


def cov_matrix(domain: SpatialDomain, params: KernelParams) -> np.ndarray:
    """Dense covariance matrix of the kernel over ``domain``."""
    levels, inverse = domain.distance_levels()
    vals = params.variance * _correlation(params, levels)
    return vals[inverse]


def cross_cov(a, b, params: KernelParams, taper: TaperSpec | None = None) -> np.ndarray:
    """Dense (optionally tapered) covariance between two point sets."""
    d = pairwise_distances(a, b)
    c = params.variance * _correlation(params, d)
    if taper is not None:
        c *= taper_eval(taper, d)
    return c


class TaperGeometry:
    """Pairs of locations inside the taper support, with a band ordering.

    Depends only on the locations and ``taper_range``; cached per domain.
    """

    def __init__(self, domain: SpatialDomain, taper: TaperSpec):
        locs = domain.locations
        pairs = cKDTree(locs).query_pairs(taper.taper_range, output_type="ndarray")
        if len(pairs):
            pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
            diff = locs[pairs[:, 0]] - locs[pairs[:, 1]]
            dist = np.sqrt(diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1])
            keep = dist < taper.taper_range
            pairs, dist = pairs[keep], dist[keep]
        else:
            pairs = np.empty((0, 2), dtype=np.int64)
            dist = np.empty(0)
        self.n = domain.n
        self.rows = pairs[:, 0].astype(np.int64)
        self.cols = pairs[:, 1].astype(np.int64)
        self.levels, self.inverse = np.unique(dist, return_inverse=True)
        self.weights = taper_eval(taper, self.levels)
        self._pattern = None

    @classmethod
    def of(cls, domain: SpatialDomain, taper: TaperSpec) -> "TaperGeometry":
        key = ("taper", taper.taper_range, taper.family)
        if key not in domain._cache:
            domain._cache[key] = cls(domain, taper)
        return domain._cache[key]

    @property
    def pattern(self) -> BandPattern:
        if self._pattern is None:
            self._pattern = BandPattern(self.n, self.rows, self.cols)
        return self._pattern

    @property
    def nonzero_fraction(self) -> float:
        return (2 * len(self.rows) + self.n) / float(self.n) ** 2

    def offdiag(self, params: KernelParams) -> np.ndarray:
        """Tapered covariance values on the stored pairs."""
        vals = params.variance * _correlation(params, self.levels) * self.weights
        return vals[self.inverse]


def cov_tapered(domain: SpatialDomain, params: KernelParams, taper: TaperSpec) -> sparse.csr_matrix:
    """Sparse tapered covariance ``cov_matrix ⊙ taper``."""
    geo = TaperGeometry.of(domain, taper)
    off = geo.offdiag(params)
    n = domain.n
    rows = np.r_[geo.rows, geo.cols, np.arange(n)]
    cols = np.r_[geo.cols, geo.rows, np.arange(n)]
    vals = np.r_[off, off, np.full(n, params.variance)]
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


def spacetime_cov(spatial, temporal: TemporalStructure, T):
    """Separable covariance ``R_T ⊗ spatial`` (time-major ordering).

    ``T`` is either a period count or an explicit array of time indices.
    """
    times = np.arange(T) if np.isscalar(T) else np.asarray(T)
    if len(times) < 1:
        raise DomainError("T must be >= 1")
    R = temporal.correlation(times)
    if sparse.issparse(spatial):
        return sparse.kron(sparse.csr_matrix(R), spatial, format="csr")
    return np.kron(R, np.asarray(spatial))


def hadamard_rank1(cov, x):
    """Elementwise product ``cov ⊙ x x^T`` keeping the sparsity pattern."""
    x = np.asarray(x, dtype=float)
    if cov.shape[0] != x.shape[0] or cov.shape[1] != x.shape[0]:
        raise DimensionError(f"covariate of length {len(x)} vs matrix {cov.shape}")
    if sparse.issparse(cov):
        c = sparse.coo_matrix(cov)
        return sparse.csr_matrix(
            (c.data * x[c.row] * x[c.col], (c.row, c.col)), shape=c.shape
        )
    return np.asarray(cov) * np.outer(x, x)


def factorize_psd(matrix):
    """Cholesky factor under the jitter policy; ``.jitter`` holds the inflation used."""
    return factorize(matrix)


def write_coo(matrix, path) -> None:
    """Dump the non-zero entries as ``row col value`` lines (debugging aid)."""
    c = sparse.coo_matrix(matrix)
    with open(Path(path), "w") as fh:
        fh.write(f"# {c.shape[0]} {c.shape[1]} {c.nnz}\n")
        for i, j, v in zip(c.row, c.col, c.data):
            fh.write(f"{int(i)} {int(j)} {float(v)!r}\n")
