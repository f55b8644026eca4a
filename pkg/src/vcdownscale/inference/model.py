"""Model specifications and the parameter vector of the response model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..covariance import KernelParams, TemporalStructure
from ..exceptions import ConfigurationError

MODEL_KINDS = ("M0", "M1", "M2", "M3", "generic")


@dataclass(frozen=True)
class ModelSpec:
    """Structure of the response model ``Y = a + sum_j b_j x_j + g``.

    Kinds
    -----
    M0
        constant intercept plus nugget
    M1
        spatially varying intercept, independent across periods
    M2
        spatially varying intercept, AR(1) across periods
    M3
        M2 with ``q`` fixed (non-varying) covariate slopes
    generic
        any combination of the flags below

    The kernel smoothness ``nu`` is held fixed during estimation.
    """

    kind: str = "generic"
    q: int = 0
    temporal: TemporalStructure = field(default_factory=TemporalStructure)
    varying_intercept: bool = True
    varying_slopes: bool = False
    family: str = "matern"
    nu: float = 1.0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigurationError(f"unknown model kind {self.kind!r}")
        if self.q < 0:
            raise ConfigurationError("q must be non-negative")
        if self.varying_slopes and self.q == 0:
            raise ConfigurationError("varying slopes need at least one covariate")
        if self.kind == "M0" and (self.varying_intercept or self.varying_slopes or self.q):
            raise ConfigurationError("M0 has no varying terms and no covariates")
        if self.kind == "M1" and (self.temporal.kind != "iid" or not self.varying_intercept
                                  or self.varying_slopes or self.q):
            raise ConfigurationError("M1 is an i.i.d.-in-time varying intercept without covariates")
        if self.kind == "M2" and (self.temporal.kind != "ar1" or not self.varying_intercept
                                  or self.varying_slopes or self.q):
            raise ConfigurationError("M2 is an AR(1) varying intercept without covariates")
        if self.kind == "M3" and (self.temporal.kind != "ar1" or self.q < 1
                                  or self.varying_slopes or not self.varying_intercept):
            raise ConfigurationError("M3 is M2 with fixed covariate slopes (q >= 1)")

    @classmethod
    def preset(cls, kind: str, family: str = "matern", nu: float = 1.0, q: int = 1) -> "ModelSpec":
        iid, ar1 = TemporalStructure("iid"), TemporalStructure("ar1")
        if kind == "M0":
            return cls("M0", 0, iid, False, False, family, nu)
        if kind == "M1":
            return cls("M1", 0, iid, True, False, family, nu)
        if kind == "M2":
            return cls("M2", 0, ar1, True, False, family, nu)
        if kind == "M3":
            return cls("M3", q, ar1, True, False, family, nu)
        raise ConfigurationError(f"no preset for model kind {kind!r}")

    @property
    def ar1(self) -> bool:
        return self.temporal.kind == "ar1"

    @property
    def n_fixed(self) -> int:
        """Number of mean coefficients (intercept plus one per covariate)."""
        return 1 + self.q

    def kernel(self, range_: float, sd: float) -> KernelParams:
        return KernelParams(self.family, float(range_), float(sd), self.nu)


@dataclass(frozen=True)
class ParamVector:
    """All estimable quantities of a model.

    ``beta0`` is the intercept mean, ``beta1`` the covariate slope means (or
    fixed slopes for M3), ``theta0``/``theta1`` the kernels of the varying
    intercept and slopes, ``tau_sq`` the nugget variance and ``rho_ar`` the
    AR(1) coefficient.
    """

    beta0: float
    beta1: tuple[float, ...] = ()
    theta0: KernelParams | None = None
    theta1: tuple[KernelParams, ...] = ()
    tau_sq: float = 1.0
    rho_ar: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "beta1", tuple(float(b) for b in self.beta1))
        object.__setattr__(self, "theta1", tuple(self.theta1))
        if not self.tau_sq > 0:
            raise ConfigurationError("tau_sq must be positive")
        if self.rho_ar is not None and not abs(self.rho_ar) < 1:
            raise ConfigurationError("|rho_ar| must be < 1")

    @property
    def beta(self) -> np.ndarray:
        return np.r_[self.beta0, self.beta1]

    def with_beta(self, beta) -> "ParamVector":
        beta = np.asarray(beta, dtype=float)
        return replace(self, beta0=float(beta[0]), beta1=tuple(beta[1:]))

    def temporal(self, model: ModelSpec) -> TemporalStructure:
        if model.ar1:
            return TemporalStructure("ar1", 0.0 if self.rho_ar is None else self.rho_ar)
        return TemporalStructure("iid")

    def check(self, model: ModelSpec) -> None:
        if len(self.beta1) != model.q:
            raise ConfigurationError(f"expected {model.q} slope means, got {len(self.beta1)}")
        if model.varying_intercept and self.theta0 is None:
            raise ConfigurationError("varying intercept requires theta0")
        if model.varying_slopes and len(self.theta1) != model.q:
            raise ConfigurationError("varying slopes require one kernel per covariate")
        if model.ar1 and self.rho_ar is None:
            raise ConfigurationError("AR(1) model requires rho_ar")


class ParamLayout:
    """Maps a :class:`ParamVector` to and from an unconstrained real vector.

    Ranges, standard deviations and the nugget variance are log-transformed,
    ``rho_ar`` uses ``atanh``; mean coefficients are left as they are and are
    only included when ``with_beta`` is true.
    """

    def __init__(self, model: ModelSpec, with_beta: bool = False):
        self.model = model
        self.with_beta = with_beta
        names = []
        if with_beta:
            names += ["beta0"] + [f"beta1_{j + 1}" for j in range(model.q)]
        if model.varying_intercept:
            names += ["range0", "sd0"]
        if model.varying_slopes:
            for j in range(model.q):
                names += [f"range1_{j + 1}", f"sd1_{j + 1}"]
        names.append("tau_sq")
        if model.ar1:
            names.append("rho_ar")
        self.names = tuple(names)

    def __len__(self) -> int:
        return len(self.names)

    def natural(self, p: ParamVector) -> np.ndarray:
        """Parameter values on their natural scale, in ``names`` order."""
        vals = []
        if self.with_beta:
            vals += [p.beta0, *p.beta1]
        if self.model.varying_intercept:
            vals += [p.theta0.range, p.theta0.sd]
        if self.model.varying_slopes:
            for k in p.theta1:
                vals += [k.range, k.sd]
        vals.append(p.tau_sq)
        if self.model.ar1:
            vals.append(p.rho_ar)
        return np.asarray(vals, dtype=float)

    def to_unconstrained(self, p: ParamVector) -> np.ndarray:
        v = self.natural(p)
        out = v.copy()
        for i, name in enumerate(self.names):
            if name == "rho_ar":
                out[i] = math.atanh(v[i])
            elif not name.startswith("beta"):
                out[i] = math.log(v[i])
        return out

    def from_natural(self, v, beta=None) -> ParamVector:
        v = np.asarray(v, dtype=float)
        it = iter(v)
        m = self.model
        if self.with_beta:
            beta0 = next(it)
            beta1 = tuple(next(it) for _ in range(m.q))
        else:
            beta = np.zeros(m.n_fixed) if beta is None else np.asarray(beta, dtype=float)
            beta0, beta1 = beta[0], tuple(beta[1:])
        theta0 = m.kernel(next(it), next(it)) if m.varying_intercept else None
        theta1 = tuple(m.kernel(next(it), next(it)) for _ in range(m.q)) if m.varying_slopes else ()
        tau_sq = next(it)
        rho = next(it) if m.ar1 else None
        return ParamVector(float(beta0), beta1, theta0, theta1, float(tau_sq),
                           None if rho is None else float(rho))

    def natural_from_unconstrained(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        v = u.copy()
        for i, name in enumerate(self.names):
            if name == "rho_ar":
                v[i] = math.tanh(u[i])
            elif not name.startswith("beta"):
                v[i] = math.exp(u[i])
        return v

    def from_unconstrained(self, u, beta=None) -> ParamVector:
        return self.from_natural(self.natural_from_unconstrained(u), beta)

    def log_jacobian(self, u) -> float:
        """``log |d natural / d unconstrained|``."""
        total = 0.0
        for i, name in enumerate(self.names):
            if name == "rho_ar":
                total += 2.0 * (math.log(2.0) - np.logaddexp(u[i], -u[i]))
            elif not name.startswith("beta"):
                total += u[i]
        return total
