"""Gaussian log-likelihood of the varying-coefficient response model.

With ``x_0 = 1`` for the intercept and ``vec`` in time-major order, ::

    vec(Y) ~ N(F beta, Sigma_Y),
    Sigma_Y = sum_j (R_T ⊗ S_j) ⊙ (x_j x_j') + tau_sq I,

where ``S_j`` is the spatial covariance of the j-th varying coefficient
(tapered by ``C_rho`` for the sparse backend) and ``R_T`` the temporal
correlation.  :class:`CovarianceStructure` factorizes ``Sigma_Y`` along the
cheapest route the model allows:

* no varying slopes: ``Sigma_Y = (P ⊗ I) diag_k(d_k S_0 + tau_sq I) (P ⊗ I)'``
  with ``R_T = P diag(d) P'``, so only ``n x n`` blocks are factorized (one
  block when periods are independent);
* varying slopes, independent periods: one ``n x n`` block per period;
* varying slopes with AR(1): the full ``nT x nT`` matrix.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import linalg, sparse

from .._linalg import BandCholesky, DenseCholesky, sparse_cholesky
from ..covariance import (TaperGeometry, TaperSpec, cov_matrix, cov_tapered,
                          hadamard_rank1, spacetime_cov)
from ..exceptions import DimensionError, NumericalError
from ..grid import SpatialDomain
from .model import ModelSpec, ParamVector

LOG_2PI = math.log(2.0 * math.pi)


class DiagonalFactor:
    jitter = 0.0

    def __init__(self, diag: np.ndarray):
        if np.any(diag <= 0):
            raise NumericalError("non-positive diagonal covariance")
        self.diag = diag

    @property
    def logdet(self) -> float:
        return float(np.sum(np.log(self.diag)))

    def solve(self, b):
        return b / (self.diag[:, None] if b.ndim == 2 else self.diag)


def check_covariates(model: ModelSpec, X, T: int, n: int):
    if model.q == 0:
        return None
    if X is None:
        raise DimensionError(f"model needs {model.q} covariates")
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[:, :, None]
    if X.shape != (T, n, model.q):
        raise DimensionError(f"covariates of shape {X.shape}, expected {(T, n, model.q)}")
    return X


def design_matrix(model: ModelSpec, X, T: int, n: int) -> np.ndarray:
    """Mean design ``[1, x_1, ..., x_q]`` in time-major order, shape ``(T*n, 1+q)``."""
    F = np.ones((T * n, model.n_fixed))
    if model.q:
        F[:, 1:] = np.asarray(X).reshape(T * n, model.q)
    return F


class CovarianceStructure:
    """Factorized ``Sigma_Y`` for one parameter setting and observation set."""

    def __init__(self, model: ModelSpec, params: ParamVector, domain: SpatialDomain,
                 times, X=None, taper: TaperSpec | None = None):
        params.check(model)
        self.model, self.params, self.domain, self.taper = model, params, domain, taper
        self.times = np.asarray(times)
        self.T, self.n = len(self.times), domain.n
        self.N = self.T * self.n
        self.X = check_covariates(model, X, self.T, self.n)
        self.R = params.temporal(model).correlation(self.times) if model.ar1 else None
        self._geo = TaperGeometry.of(domain, taper) if taper is not None else None
        if not model.varying_slopes:
            self._build_rotated()
        elif self.R is None:
            self._build_blocks()
        else:
            self._build_full()

    # -- spatial pieces -------------------------------------------------
    def _kernels(self):
        p = self.params
        ks = [p.theta0] if self.model.varying_intercept else [None]
        if self.model.varying_slopes:
            ks += list(p.theta1)
        return ks

    def _block_factor(self, kernels, weights, d=1.0):
        """Factor of ``d * sum_j S_j ⊙ w_j w_j' + tau_sq I`` (``w_j=None`` means ones)."""
        tau_sq = self.params.tau_sq
        n = self.n
        active = [(k, w) for k, w in zip(kernels, weights) if k is not None]
        if not active:
            return DiagonalFactor(np.full(n, tau_sq))
        diag = np.full(n, tau_sq)
        for k, w in active:
            diag = diag + d * k.variance * (1.0 if w is None else w * w)
        if self._geo is None:
            a = np.zeros((n, n))
            for k, w in active:
                s = cov_matrix(self.domain, k)
                a += d * (s if w is None else s * np.outer(w, w))
            a[np.diag_indices(n)] = diag
            return DenseCholesky(a, scale=float(diag.max()))
        geo = self._geo
        off = np.zeros(len(geo.rows))
        for k, w in active:
            o = geo.offdiag(k)
            off += d * (o if w is None else o * w[geo.rows] * w[geo.cols])
        return BandCholesky(geo.pattern, diag, off, scale=float(diag.max()))

    def _build_rotated(self):
        if self.R is None:
            self.P = None
            evals = np.ones(1)
            self.block_of = np.zeros(self.T, dtype=np.int64)
        else:
            evals, self.P = linalg.eigh(self.R)
            evals = np.maximum(evals, 0.0)
            self.block_of = np.arange(self.T)
        kernels = [self.params.theta0 if self.model.varying_intercept else None]
        if self._geo is None and kernels[0] is not None and len(evals) > 1:
            # build the dense spatial matrix once for all eigen-blocks
            s0 = cov_matrix(self.domain, kernels[0])
            self.factors = []
            for d in evals:
                a = d * s0
                a[np.diag_indices(self.n)] += self.params.tau_sq
                self.factors.append(DenseCholesky(a, scale=float(np.max(np.diag(a)))))
        else:
            self.factors = [self._block_factor(kernels, [None], d) for d in evals]
        self.kind = "rotated"

    def _build_blocks(self):
        kernels = self._kernels()
        self.factors = []
        for t in range(self.T):
            weights = [None] + [self.X[t, :, j] for j in range(self.model.q)]
            self.factors.append(self._block_factor(kernels, weights))
        self.block_of = np.arange(self.T)
        self.P = None
        self.kind = "blocks"

    def _build_full(self):
        kernels = self._kernels()
        temporal = self.params.temporal(self.model)
        xs = [None] + [self.X[:, :, j].ravel() for j in range(self.model.q)]
        total = None
        for k, x in zip(kernels, xs):
            if k is None:
                continue
            s = cov_matrix(self.domain, k) if self._geo is None else cov_tapered(self.domain, k, self.taper)
            big = spacetime_cov(s, temporal, self.times)
            if x is not None:
                big = hadamard_rank1(big, x)
            total = big if total is None else total + big
        if self._geo is None:
            total = np.asarray(total)
            total[np.diag_indices(self.N)] += self.params.tau_sq
            self.factors = [DenseCholesky(total)]
        else:
            total = sparse.csr_matrix(total) + self.params.tau_sq * sparse.identity(self.N, format="csr")
            self.factors = [sparse_cholesky(total)]
        self.kind = "full"

    # -- algebra ----------------------------------------------------------
    @property
    def jitter(self) -> float:
        return max(f.jitter for f in self.factors)

    @property
    def logdet(self) -> float:
        if self.kind == "full":
            return self.factors[0].logdet
        return float(sum(self.factors[b].logdet for b in self.block_of))

    def solve(self, v: np.ndarray) -> np.ndarray:
        """``Sigma_Y^{-1} v`` for ``v`` of shape ``(N,)`` or ``(N, k)``."""
        vec = v.ndim == 1
        v2 = v[:, None] if vec else v
        if self.kind == "full":
            out = self.factors[0].solve(v2)
            return out[:, 0] if vec else out
        k = v2.shape[1]
        w = v2.reshape(self.T, self.n, k)
        if self.P is not None:
            w = np.einsum("st,snk->tnk", self.P, w)
        if len(self.factors) == 1:
            flat = w.transpose(1, 0, 2).reshape(self.n, self.T * k)
            u = self.factors[0].solve(flat).reshape(self.n, self.T, k).transpose(1, 0, 2)
        else:
            u = np.empty_like(w)
            for t in range(self.T):
                u[t] = self.factors[self.block_of[t]].solve(w[t])
        if self.P is not None:
            u = np.einsum("ts,snk->tnk", self.P, u)
        out = u.reshape(self.N, k)
        return out[:, 0] if vec else out


def _gaussian_loglik(struct: CovarianceStructure, resid: np.ndarray) -> float:
    quad = float(resid @ struct.solve(resid))
    return -0.5 * (struct.N * LOG_2PI + struct.logdet + quad)


def gls_beta(struct: CovarianceStructure, y: np.ndarray, F: np.ndarray):
    """Generalized least squares mean coefficients and their precision ``F' S^-1 F``."""
    sf = struct.solve(F)
    a = F.T @ sf
    b = sf.T @ y
    try:
        beta = linalg.solve(a, b, assume_a="pos")
    except linalg.LinAlgError as exc:
        raise NumericalError("singular GLS system") from exc
    return beta, a


def _observed(Y, X, model):
    y = Y.values.ravel()
    Xc = check_covariates(model, X, Y.T, Y.n)
    F = design_matrix(model, Xc, Y.T, Y.n)
    return y, Xc, F


def loglik(model: ModelSpec, params: ParamVector, Y, X=None, taper: TaperSpec | None = None) -> float:
    y, Xc, F = _observed(Y, X, model)
    struct = CovarianceStructure(model, params, Y.domain, Y.times, Xc, taper)
    return _gaussian_loglik(struct, y - F @ params.beta)


def loglik_exact(model: ModelSpec, params: ParamVector, Y, X=None) -> float:
    """Exact Gaussian log-likelihood of ``vec(Y)`` (dense factorizations)."""
    return loglik(model, params, Y, X, None)


def loglik_tapered(model: ModelSpec, params: ParamVector, taper: TaperSpec, Y, X=None) -> float:
    """Log-likelihood with every spatial covariance tapered to ``taper.taper_range``."""
    return loglik(model, params, Y, X, taper)


def profile_loglik(model: ModelSpec, params: ParamVector, Y, X=None,
                   taper: TaperSpec | None = None):
    """Log-likelihood maximized over the mean coefficients.

    Returns ``(loglik, beta_hat, structure)``; ``params``' own ``beta`` is ignored.
    """
    y, Xc, F = _observed(Y, X, model)
    struct = CovarianceStructure(model, params, Y.domain, Y.times, Xc, taper)
    beta, _ = gls_beta(struct, y, F)
    return _gaussian_loglik(struct, y - F @ beta), beta, struct
