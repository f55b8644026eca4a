import math

import numpy as np
import pytest

import oracles
from instances import KINDS, make_model, oracle_moments, random_instance, random_params
from vcdownscale.covariance import KernelParams, TaperSpec, TemporalStructure
from vcdownscale.exceptions import ConfigurationError, DimensionError
from vcdownscale.grid import SpatialDomain
from vcdownscale.inference import (
    CovarianceStructure, ModelSpec, ParamLayout, ParamVector, loglik_exact, loglik_tapered,
    profile_loglik,
)
from vcdownscale.simulate import SpaceTimeField


@pytest.mark.parametrize("kind", KINDS)
def test_exact_matches_dense_oracle(kind):
    rng = np.random.default_rng(100 + KINDS.index(kind))
    for _ in range(3):
        model, params, Y, X = random_instance(rng, 120, kind=kind)
        mean, sig = oracle_moments(oracles, model, params, Y, X)
        ref = oracles.mvn_logpdf(Y.values.ravel(), mean, sig)
        assert loglik_exact(model, params, Y, X) == pytest.approx(ref, rel=1e-10)


def test_oracles_agree():
    rng = np.random.default_rng(0)
    model, params, Y, X = random_instance(rng, 60, kind="M2")
    mean, sig = oracle_moments(oracles, model, params, Y, X)
    y = Y.values.ravel()
    assert oracles.mvn_logpdf(y, mean, sig) == pytest.approx(oracles.mvn_logpdf_scipy(y, mean, sig), rel=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_tapered_matches_dense_tapered_oracle(kind):
    rng = np.random.default_rng(len(kind) * 7 + 1)
    model, params, Y, X = random_instance(rng, 150, sides=(5, 8), kind=kind)
    taper = TaperSpec(0.35)
    mean, sig = oracle_moments(oracles, model, params, Y, X, taper=0.35)
    ref = oracles.mvn_logpdf(Y.values.ravel(), mean, sig)
    assert loglik_tapered(model, params, taper, Y, X) == pytest.approx(ref, rel=1e-10)


def test_scalar_m0_case():
    d = SpatialDomain(np.array([[0.5, 0.5]]), (1, 1), (1, 1), (0, 1, 0, 1))
    Y = SpaceTimeField(np.array([[2.0]]), d)
    ll = loglik_exact(ModelSpec.preset("M0"), ParamVector(0.5, tau_sq=4.0), Y)
    assert ll == pytest.approx(-0.5 * (math.log(2 * math.pi * 4.0) + 1.5 ** 2 / 4.0), rel=1e-14)


def test_vanishing_spatial_effect_is_iid():
    rng = np.random.default_rng(3)
    d = SpatialDomain.lattice((0, 1, 0, 1), 5)
    Y = SpaceTimeField(rng.normal(size=(3, 25)), d)
    m1 = ModelSpec.preset("M1")
    p = ParamVector(0.1, theta0=KernelParams("matern", 0.3, 1e-9, 1.0), tau_sq=0.7)
    iid = np.sum(-0.5 * (math.log(2 * math.pi * 0.7) + (Y.values - 0.1) ** 2 / 0.7))
    assert loglik_exact(m1, p, Y) == pytest.approx(iid, rel=1e-10)


def test_fully_tapered_is_independent():
    rng = np.random.default_rng(4)
    model = make_model("slopes-ar1", "exponential", q=1)
    d = SpatialDomain.lattice((0, 1, 0, 1), 6)
    X = rng.normal(size=(4, 36, 1))
    Y = SpaceTimeField(rng.normal(size=(4, 36)), d)
    p = ParamVector(0.2, (0.3,), KernelParams("exponential", 0.3, 0.8), (KernelParams("exponential", 0.2, 0.5),),
                    0.1, 0.0)
    taper = TaperSpec(0.5 * d.min_distance)
    # rho_ar = 0 keeps periods independent too, so the covariance is diagonal
    var = 0.8 ** 2 + 0.5 ** 2 * X[..., 0] ** 2 + 0.1
    r = Y.values - 0.2 - 0.3 * X[..., 0]
    ref = np.sum(-0.5 * (np.log(2 * np.pi * var) + r ** 2 / var))
    assert loglik_tapered(model, p, taper, Y, X) == pytest.approx(ref, rel=1e-10)


def test_fully_tapered_ar1_keeps_temporal_blocks():
    rng = np.random.default_rng(5)
    model = ModelSpec.preset("M2", "exponential")
    d = SpatialDomain.lattice((0, 1, 0, 1), 4)
    Y = SpaceTimeField(rng.normal(size=(3, 16)), d)
    p = ParamVector(0.0, (), KernelParams("exponential", 0.3, 1.2), (), 0.2, 0.6)
    R = oracles.temporal_corr(Y.times, 0.6)
    C = 1.44 * R + 0.2 * np.eye(3)
    ref = sum(oracles.mvn_logpdf(Y.values[:, w], np.zeros(3), C) for w in range(16))
    assert loglik_tapered(model, p, TaperSpec(0.1), Y) == pytest.approx(ref, rel=1e-10)


def test_large_taper_approaches_exact():
    rng = np.random.default_rng(6)
    model = ModelSpec.preset("M1", "exponential")
    d = SpatialDomain.lattice((0, 1, 0, 1), 12)
    p = ParamVector(0.0, (), KernelParams("exponential", 0.1, 1.0), (), 0.2)
    Y = SpaceTimeField(rng.normal(size=(1, d.n)), d)
    exact = loglik_exact(model, p, Y)
    gaps = [abs(loglik_tapered(model, p, TaperSpec(m * d.diameter), Y) - exact) / abs(exact)
            for m in (0.5, 1, 2, 5, 10)]
    assert all(b <= a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] <= 1e-4


def test_permutation_invariance():
    rng = np.random.default_rng(7)
    model = ModelSpec.preset("M1", "exponential")
    d = SpatialDomain.lattice((0, 1, 0, 1), 5)
    p = ParamVector(0.3, (), KernelParams("exponential", 0.4, 0.9), (), 0.3)
    Y = SpaceTimeField(rng.normal(size=(2, 25)), d)
    perm = rng.permutation(25)
    dp = SpatialDomain(d.locations[perm], d.spacing, d.shape, d.extent)
    Yp = SpaceTimeField(Y.values[:, perm], dp)
    assert loglik_exact(model, p, Yp) == pytest.approx(loglik_exact(model, p, Y), rel=1e-12)
    t = TaperSpec(0.5)
    assert loglik_tapered(model, p, t, Yp) == pytest.approx(loglik_tapered(model, p, t, Y), rel=1e-12)


def test_profile_gls_beats_any_beta():
    rng = np.random.default_rng(8)
    model, params, Y, X = random_instance(rng, 80, kind="M3")
    ll, beta, _ = profile_loglik(model, params, Y, X)
    assert ll == pytest.approx(loglik_exact(model, params.with_beta(beta), Y, X), rel=1e-12)
    for _ in range(5):
        other = params.with_beta(beta + rng.normal(scale=0.1, size=beta.shape))
        assert loglik_exact(model, other, Y, X) <= ll + 1e-9


def test_structure_solve_matches_dense():
    rng = np.random.default_rng(9)
    for kind in KINDS:
        model, params, Y, X = random_instance(rng, 60, kind=kind)
        _, sig = oracle_moments(oracles, model, params, Y, X)
        s = CovarianceStructure(model, params, Y.domain, Y.times, X)
        v = rng.normal(size=Y.T * Y.n)
        np.testing.assert_allclose(s.solve(v), np.linalg.solve(sig, v), rtol=1e-8, atol=1e-10)
        assert s.logdet == pytest.approx(np.linalg.slogdet(sig)[1], rel=1e-10, abs=1e-9)


def test_covariate_checks():
    model = make_model("M3", q=2)
    d = SpatialDomain.lattice((0, 1, 0, 1), 3)
    Y = SpaceTimeField(np.zeros((2, 9)), d)
    p = random_params(model, np.random.default_rng(0))
    with pytest.raises(DimensionError):
        loglik_exact(model, p, Y, None)
    with pytest.raises(DimensionError):
        loglik_exact(model, p, Y, np.zeros((2, 9, 1)))
    with pytest.raises(ConfigurationError):
        loglik_exact(ModelSpec.preset("M2"), ParamVector(0.0, theta0=KernelParams("matern", 1, 1)), Y)


class TestLayout:
    @pytest.mark.parametrize("kind", KINDS)
    def test_round_trip(self, kind):
        rng = np.random.default_rng(10)
        model = make_model(kind, q=2)
        p = random_params(model, rng)
        for with_beta in (False, True):
            lay = ParamLayout(model, with_beta=with_beta)
            u = lay.to_unconstrained(p)
            assert len(u) == len(lay)
            back = lay.from_unconstrained(u, None if with_beta else p.beta)
            np.testing.assert_allclose(lay.natural(back), lay.natural(p), rtol=1e-12)

    def test_jacobian_matches_finite_difference(self):
        model = ModelSpec.preset("M2")
        lay = ParamLayout(model)
        u = np.array([0.2, -0.4, 0.1, 0.5])[: len(lay)]
        eps = 1e-6
        J = np.empty((len(u), len(u)))
        for i in range(len(u)):
            e = np.zeros(len(u))
            e[i] = eps
            J[:, i] = (lay.natural_from_unconstrained(u + e) - lay.natural_from_unconstrained(u - e)) / (2 * eps)
        assert lay.log_jacobian(u) == pytest.approx(np.linalg.slogdet(J)[1], abs=1e-6)


def test_temporal_requires_rho():
    with pytest.raises(ConfigurationError):
        ParamVector(0.0, rho_ar=1.0)
    with pytest.raises(ConfigurationError):
        ModelSpec("M1", 0, TemporalStructure("ar1"))
