"""Brute-force reference implementations used as test oracles.

Everything here is written from the formulas with plain loops, ``cdist``,
``scipy.special.kv`` and ``scipy.stats``; nothing calls into the package's
covariance or likelihood code.
"""

import math

import numpy as np
from scipy import special, stats
from scipy.spatial.distance import cdist


def matern(d, range_, sd, nu):
    d = np.asarray(d, dtype=float)
    out = np.empty_like(d)
    for idx, v in np.ndenumerate(d):
        if v == 0:
            out[idx] = sd ** 2
        else:
            r = v / range_
            out[idx] = sd ** 2 * 2 ** (1 - nu) / math.gamma(nu) * r ** nu * special.kv(nu, r)
    return out


def exponential(d, range_, sd):
    return sd ** 2 * np.exp(-np.asarray(d, dtype=float) / range_)


def kernel(d, k):
    """Covariance for a package ``KernelParams`` computed from the formula."""
    if k.family == "exponential":
        return exponential(d, k.range, k.sd)
    return matern(d, k.range, k.sd, k.nu)


def wendland1(d, rho):
    r = np.asarray(d, dtype=float) / rho
    return np.where(r < 1, (1 - r) ** 4 * (1 + 4 * r), 0.0)


def temporal_corr(times, rho):
    T = len(times)
    R = np.empty((T, T))
    for a in range(T):
        for b in range(T):
            R[a, b] = rho ** abs(times[a] - times[b]) if rho else float(a == b)
    return R


def sigma_y(locs, times, theta0, theta1, tau_sq, rho, X=None, taper=None):
    """Dense ``Sigma_Y`` in time-major order by explicit double loops over (t, w)."""
    n, T = len(locs), len(times)
    D = cdist(locs, locs)
    W = wendland1(D, taper) if taper is not None else np.ones_like(D)
    R = temporal_corr(times, rho)
    S0 = kernel(D, theta0) * W if theta0 is not None else None
    S1 = [kernel(D, k) * W for k in theta1]
    N = n * T
    out = np.zeros((N, N))
    for a in range(N):
        ta, wa = divmod(a, n)
        for b in range(N):
            tb, wb = divmod(b, n)
            v = 0.0
            if S0 is not None:
                v += R[ta, tb] * S0[wa, wb]
            for j, S in enumerate(S1):
                v += R[ta, tb] * S[wa, wb] * X[ta, wa, j] * X[tb, wb, j]
            out[a, b] = v
        out[a, a] += tau_sq
    return out


def mean_vector(beta, T, n, X=None):
    m = np.full(T * n, beta[0], dtype=float)
    if X is not None:
        m = m + X.reshape(T * n, -1) @ np.asarray(beta[1:], dtype=float)
    return m


def mvn_logpdf(y, mean, cov):
    """Explicit ``slogdet`` + ``solve`` Gaussian density."""
    sign, logdet = np.linalg.slogdet(cov)
    assert sign > 0
    r = y - mean
    return -0.5 * (len(y) * math.log(2 * math.pi) + logdet + r @ np.linalg.solve(cov, r))


def mvn_logpdf_scipy(y, mean, cov):
    return float(stats.multivariate_normal(mean, cov).logpdf(y))


def conditional(mean, cov, y, obs, tgt):
    """Partitioned-Gaussian conditional mean and marginal variances of ``tgt`` given ``obs``."""
    Soo = cov[np.ix_(obs, obs)]
    Sto = cov[np.ix_(tgt, obs)]
    Stt = cov[np.ix_(tgt, tgt)]
    mu = mean[tgt] + Sto @ np.linalg.solve(Soo, y[obs] - mean[obs])
    V = Stt - Sto @ np.linalg.solve(Soo, Sto.T)
    return mu, np.diag(V)


def interval_score_loop(y, lo, hi, level):
    total = 0.0
    for yi, li, ui in zip(y, lo, hi):
        s = ui - li
        if yi < li:
            s += 2.0 / (1.0 - level) * (li - yi)
        if yi > ui:
            s += 2.0 / (1.0 - level) * (yi - ui)
        total += s
    return total / len(y)
