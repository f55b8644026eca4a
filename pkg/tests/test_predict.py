import math
import warnings

import numpy as np
import pytest

import oracles
from instances import KINDS, random_instance
from vcdownscale.covariance import KernelParams, TaperSpec
from vcdownscale.exceptions import ConfigurationError, DimensionError, NumericalError
from vcdownscale.grid import SpatialDomain
from vcdownscale.inference import FitResult, ModelSpec, ParamLayout, ParamVector, PosteriorDraws
from vcdownscale.predict import (
    PredictionResult, _mixture_quantiles, add_offset, back_transform, evaluate_at_stations,
    leave_one_period_out, predict_response, read_predictions_csv, write_predictions_csv,
)
from vcdownscale.simulate import SpaceTimeField


def plug_in(model, params, taper=None):
    return FitResult(params, 0.0, 1, True, 0.0, "ml-exact", model, taper)


def joint_oracle(model, params, Y, X, t_new, X_new, idx, taper=None):
    """Dense partitioned-Gaussian conditional over training times plus ``t_new``."""
    times = np.r_[Y.times, t_new]
    Xall = None if X is None else np.concatenate([X, X_new], axis=0)
    locs = Y.domain.locations
    rho = params.rho_ar if model.ar1 else 0.0
    sig = oracles.sigma_y(locs, times, params.theta0, params.theta1, params.tau_sq, rho, Xall, taper)
    mean = oracles.mean_vector(params.beta, len(times), Y.n, Xall)
    N = Y.T * Y.n
    obs = np.arange(N)
    tgt = np.array([N + i * Y.n + w for i in range(len(t_new)) for w in idx])
    y = np.r_[Y.values.ravel(), np.zeros(len(t_new) * Y.n)]
    mu, var = oracles.conditional(mean, sig, y, obs, tgt)
    return mu.reshape(len(t_new), len(idx)), var.reshape(len(t_new), len(idx)), sig, obs, tgt


@pytest.mark.parametrize("kind", KINDS)
def test_matches_partitioned_gaussian(kind):
    rng = np.random.default_rng(200 + KINDS.index(kind))
    model, params, Y, X = random_instance(rng, 150, kind=kind)
    t_new = np.array([Y.times.max() + 1, Y.times.max() + 3])
    X_new = rng.normal(size=(2, Y.n, model.q)) if model.q else None
    idx = np.sort(rng.choice(Y.n, size=min(3, Y.n), replace=False))
    mu, var, *_ = joint_oracle(model, params, Y, X, t_new, X_new, idx)
    pred = predict_response(plug_in(model, params), Y, t_new, target_locations=idx, X_train=X,
                            X_target=X_new, mean_uncertainty=False)
    np.testing.assert_allclose(pred.mean, mu, rtol=0, atol=1e-8)
    np.testing.assert_allclose(pred.sd ** 2, var, rtol=0, atol=1e-8)


def test_tapered_prediction_matches_tapered_oracle():
    rng = np.random.default_rng(11)
    model, params, Y, X = random_instance(rng, 100, sides=(5, 7), kind="M2")
    t_new = np.array([Y.times.max() + 1])
    mu, var, *_ = joint_oracle(model, params, Y, X, t_new, None, np.arange(Y.n), taper=0.4)
    pred = predict_response(plug_in(model, params, TaperSpec(0.4)), Y, t_new, mean_uncertainty=False)
    np.testing.assert_allclose(pred.mean, mu, atol=1e-8)
    np.testing.assert_allclose(pred.sd ** 2, var, atol=1e-8)


@pytest.mark.parametrize("kind", ["M1", "M3", "slopes-iid"])
def test_universal_kriging_variance(kind):
    rng = np.random.default_rng(300 + KINDS.index(kind))
    model, params, Y, X = random_instance(rng, 100, kind=kind)
    t_new = np.array([Y.times.max() + 2])
    X_new = rng.normal(size=(1, Y.n, model.q)) if model.q else None
    idx = np.arange(Y.n)
    _, var_sk, sig, obs, tgt = joint_oracle(model, params, Y, X, t_new, X_new, idx)
    Xall = None if X is None else np.concatenate([X, X_new])
    F = np.ones((len(obs) + len(tgt), model.n_fixed))
    if model.q:
        F[:, 1:] = Xall.reshape(-1, model.q)
    Soo_inv = np.linalg.inv(sig[np.ix_(obs, obs)])
    Fo, Ft = F[obs], F[tgt]
    u = Ft - sig[np.ix_(tgt, obs)] @ Soo_inv @ Fo
    extra = np.einsum("ip,pq,iq->i", u, np.linalg.inv(Fo.T @ Soo_inv @ Fo), u)
    pred = predict_response(plug_in(model, params), Y, t_new, X_train=X, X_target=X_new)
    np.testing.assert_allclose(pred.sd.ravel() ** 2, var_sk.ravel() + extra, atol=1e-8)


def test_m0_plug_in():
    rng = np.random.default_rng(0)
    d = SpatialDomain.lattice((0, 1, 0, 1), 4)
    Y = SpaceTimeField(rng.normal(2.0, 1.0, size=(3, 16)), d)
    p = ParamVector(2.1, tau_sq=0.9)
    pred = predict_response(plug_in(ModelSpec.preset("M0"), p), Y, [4, 5])
    np.testing.assert_allclose(pred.mean, 2.1, rtol=1e-14)
    np.testing.assert_allclose(pred.sd, math.sqrt(0.9 * (1 + 1 / 48)), rtol=1e-12)
    z = 1.959963984540054
    np.testing.assert_allclose(pred.upper - pred.mean, z * pred.sd, rtol=1e-12)


def test_noiseless_interpolation():
    rng = np.random.default_rng(1)
    d = SpatialDomain.lattice((0, 1, 0, 1), 4)
    Y = SpaceTimeField(rng.normal(size=(1, 16)), d)
    p = ParamVector(0.0, (), KernelParams("exponential", 0.5, 1.0), (), 1e-10)
    pred = predict_response(plug_in(ModelSpec.preset("M1", "exponential"), p), Y, [1],
                            target_locations=[5], mean_uncertainty=False)
    assert pred.mean[0, 0] == pytest.approx(Y.values[0, 5], abs=1e-6)
    assert pred.sd[0, 0] < 1e-4


def _posterior(model, params_list):
    lay = ParamLayout(model, with_beta=True)
    draws = np.array([lay.natural(p) for p in params_list])
    return PosteriorDraws(lay.names, draws, 0.3, np.ones(len(lay.names)), model)


def test_posterior_with_identical_draws_equals_plug_in():
    rng = np.random.default_rng(2)
    model, params, Y, X = random_instance(rng, 60, kind="M2")
    post = _posterior(model, [params] * 20)
    a = predict_response(post, Y, [Y.times.max() + 1])
    b = predict_response(plug_in(model, params), Y, [Y.times.max() + 1], mean_uncertainty=False)
    np.testing.assert_allclose(a.mean, b.mean, rtol=1e-12)
    np.testing.assert_allclose(a.lower, b.lower, atol=1e-9)
    np.testing.assert_allclose(a.upper, b.upper, atol=1e-9)


def test_posterior_mixture_widens_interval():
    rng = np.random.default_rng(3)
    d = SpatialDomain.lattice((0, 1, 0, 1), 3)
    Y = SpaceTimeField(rng.normal(size=(2, 9)), d)
    model = ModelSpec.preset("M0")
    draws = [ParamVector(b, tau_sq=0.5) for b in np.linspace(-1, 1, 40)]
    mix = predict_response(_posterior(model, draws), Y, [3])
    one = predict_response(plug_in(model, ParamVector(0.0, tau_sq=0.5)), Y, [3], mean_uncertainty=False)
    assert np.all(mix.upper - mix.lower > one.upper - one.lower)


def test_mixture_quantiles_match_sampling():
    rng = np.random.default_rng(4)
    mu = np.array([[-1.0], [2.0]])
    sd = np.array([[0.5], [1.0]])
    lo, hi = _mixture_quantiles(mu, sd, [0.025, 0.975])
    comp = rng.integers(2, size=400000)
    x = rng.normal(mu[comp, 0], sd[comp, 0])
    assert lo[0] == pytest.approx(np.quantile(x, 0.025), abs=0.02)
    assert hi[0] == pytest.approx(np.quantile(x, 0.975), abs=0.02)


def test_leave_one_period_out_uses_other_periods():
    rng = np.random.default_rng(5)
    model, params, Y, X = random_instance(rng, 60, kind="M2")
    if Y.T < 2:
        Y = SpaceTimeField(np.vstack([Y.values, Y.values + 0.1]), Y.domain)
    fit = plug_in(model, params)
    lopo = leave_one_period_out(fit, Y)
    for t in range(Y.T):
        keep = [k for k in range(Y.T) if k != t]
        one = predict_response(fit, Y.take_times(keep), Y.times[t:t + 1])
        np.testing.assert_allclose(lopo.mean[t], one.mean[0], rtol=1e-12)


class TestTransforms:
    def _pred(self, m, lo, hi, scale="model"):
        a = lambda v: np.array([[v]], dtype=float)  # noqa: E731
        return PredictionResult(np.array([1]), np.zeros((1, 2)), a(m), a(lo), a(hi), 0.95, scale)

    def test_back_transform(self):
        p = back_transform(self._pred(0.0, -1.0, 1.0))
        assert (p.mean[0, 0], p.lower[0, 0], p.upper[0, 0]) == (1.0, math.exp(-1), math.e)
        assert p.scale == "physical"
        with pytest.raises(ConfigurationError):
            back_transform(p)

    def test_offset(self):
        p = add_offset(self._pred(0.0, -1.0, 1.0), 5.0)
        assert (p.mean[0, 0], p.lower[0, 0], p.upper[0, 0]) == (5.0, 4.0, 6.0)

    def test_interval_must_bracket(self):
        with pytest.raises(NumericalError):
            self._pred(2.0, -1.0, 1.0)


class TestStations:
    def _pred(self):
        d = SpatialDomain.lattice((0, 1, 0, 1), 4)
        rng = np.random.default_rng(6)
        m = rng.normal(size=(2, 16))
        return PredictionResult(np.array([1, 2]), d.locations, m, m - 1, m + 1, 0.95, "model",
                                None, np.arange(16), d)

    def test_station_on_node(self):
        pred = self._pred()
        pairs = evaluate_at_stations(pred, pred.locations[[3, 7]], np.zeros((2, 2)))
        assert pairs.node.tolist() == [3, 7, 3, 7]
        assert pairs.n_outside == 0

    def test_outside_extent(self):
        pred = self._pred()
        coords = np.array([[-0.5, 0.125], [1.5, 0.875], [0.3, 2.0]])
        with warnings.catch_warnings(record=True) as w:
            warnings.simplefilter("always")
            pairs = evaluate_at_stations(pred, coords, np.zeros((2, 3)))
        assert pairs.n_outside == 3 and "3 station" in str(w[0].message)
        assert pairs.node[:3].tolist() == [0, 15, 13]

    def test_subsample_consistency_and_missing(self):
        pred = self._pred()
        nodes = [0, 5, 9, 14]
        obs = pred.mean[:, nodes] + 0.3
        obs[1, 2] = np.nan
        pairs = evaluate_at_stations(pred, pred.locations[nodes], obs)
        assert pairs.n_dropped == 1 and len(pairs.observed) == 7
        assert np.mean((pairs.observed - pairs.mean) ** 2) == pytest.approx(0.09, rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            evaluate_at_stations(self._pred(), np.zeros((2, 2)), np.zeros((3, 2)))


def test_csv_round_trip(tmp_path):
    d = SpatialDomain.lattice((0, 2, 0, 1), 4, 3)
    rng = np.random.default_rng(7)
    m = rng.normal(size=(2, d.n))
    pred = PredictionResult(np.array([11, 12]), d.locations, m, m - 0.5, m + 0.25, 0.9)
    write_predictions_csv(pred, tmp_path / "p.csv")
    back = read_predictions_csv(tmp_path / "p.csv", level=0.9)
    np.testing.assert_array_equal(back.mean, pred.mean)
    np.testing.assert_array_equal(back.lower, pred.lower)
    np.testing.assert_array_equal(back.locations, pred.locations)
    assert back.domain.shape == (4, 3)
    np.testing.assert_allclose(back.domain.extent, (0, 2, 0, 1))
