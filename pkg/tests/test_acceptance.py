"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The lines are collected in ``RESULTS`` and repeated in the terminal summary
(see ``conftest.py``), so they show up even when output capture is on.
"""

import math
import time

import numpy as np
import pytest
from scipy import integrate

import oracles
from instances import KINDS, oracle_moments, random_instance
from vcdownscale.covariance import KernelParams, TaperSpec, TemporalStructure
from vcdownscale.grid import GridSpec, SpatialDomain
from vcdownscale.harness.bench import bench_case
from vcdownscale.harness.config import RunConfig
from vcdownscale.harness.study import TABLE3_HEADER, read_table2, run_study, table2_header
from vcdownscale.inference import (
    ChainConfig, FitResult, ModelSpec, PriorSpec, fit_ml, loglik_exact, loglik_tapered, mcmc_fit,
    posterior_summary,
)
from vcdownscale.inference.priors import log_range_prior, log_sd_prior
from vcdownscale.metrics import interval_score, interval_score_terms
from vcdownscale.predict import predict_response
from vcdownscale.simulate import (
    GlobalParams, RegionalParams, ScenarioConfig, SpaceTimeField, simulate_scenario,
)

RESULTS = []

STUDY = RunConfig(presets=("sim2-res1",), variants=("1", "2", "3"), models=("M1",),
                  replications=5, seed=0)


def record(n, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def model_drawn(rng, model, params, Y, X):
    """Replace ``Y`` by a draw from the model's own Gaussian distribution."""
    mean, sig = oracle_moments(oracles, model, params, Y, X)
    y = mean + np.linalg.cholesky(sig) @ rng.standard_normal(len(mean))
    return SpaceTimeField(y.reshape(Y.T, Y.n), Y.domain, Y.times)


@pytest.fixture(scope="module")
def study(tmp_path_factory):
    root = tmp_path_factory.mktemp("study")
    start = time.perf_counter()
    written = run_study(STUDY, root / "first")
    return written, time.perf_counter() - start, root


def physical_rows(path, split):
    return {r["scenario"]: float(r["mse"]) for r in read_table2(path)
            if r["scale"] == "physical" and r["split"] == split}


def test_c01_likelihood_oracle():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for i in range(50):
        model, params, Y, X = random_instance(rng, 200, kind=KINDS[i % len(KINDS)])
        mean, sig = oracle_moments(oracles, model, params, Y, X)
        ref = oracles.mvn_logpdf(Y.values.ravel(), mean, sig)
        worst = max(worst, abs(loglik_exact(model, params, Y, X) - ref) / abs(ref))
    secs = time.perf_counter() - start
    record(1, worst <= 1e-8 and secs < 30, f"max rel err {worst:.2e} over 50 instances, {secs:.1f} s")


def test_c02_tapered_likelihood():
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    worst_big = worst_small = 0.0
    for i in range(20):
        model, params, Y, X = random_instance(rng, 400, sides=(10, 20), kind=KINDS[i % len(KINDS)],
                                              range_lo=0.02, range_hi=0.2)
        Y = model_drawn(rng, model, params, Y, X)
        exact = loglik_exact(model, params, Y, X)
        big = loglik_tapered(model, params, TaperSpec(10 * Y.domain.diameter), Y, X)
        worst_big = max(worst_big, abs(big - exact) / abs(exact))
        # below the minimum spacing only same-location pairs survive the taper
        small = loglik_tapered(model, params, TaperSpec(0.5 * Y.domain.min_distance), Y, X)
        mean, sig = oracle_moments(oracles, model, params, Y, X)
        keep = np.equal.outer(np.arange(Y.T * Y.n) % Y.n, np.arange(Y.T * Y.n) % Y.n)
        ref = oracles.mvn_logpdf(Y.values.ravel(), mean, np.where(keep, sig, 0.0))
        worst_small = max(worst_small, abs(small - ref) / abs(ref))
    secs = time.perf_counter() - start
    ok = worst_big <= 1e-4 and worst_small <= 1e-10 and secs < 60
    record(2, ok, f"10x-diameter gap {worst_big:.2e}, fully tapered err {worst_small:.2e}, {secs:.1f} s")


def test_c03_taper_speed():
    row = bench_case(50, 0.1, trials=5)
    ok = row["nonzero_fraction"] <= 0.05 and row["speedup"] >= 5
    record(3, ok, f"n=2500, nonzero {row['nonzero_fraction']:.2%}, exact {row['exact_seconds']:.3f} s, "
                  f"tapered {row['tapered_seconds']:.4f} s, speedup {row['speedup']:.1f}x")


def test_c04_interval_score():
    a = interval_score([2.0], [0.0], [1.0], 0.95)
    b = interval_score([-0.5], [0.0], [1.0], 0.95)
    c = interval_score([0.2, 0.7], [0.0, 0.5], [1.0, 2.0], 0.95)
    hand = a == 41.0 and b == 21.0 and c == 1.25
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 30))
        y, mid, half = rng.normal(size=n), rng.normal(size=n), rng.exponential(size=n)
        level = float(rng.uniform(0.5, 0.99))
        w, p = interval_score_terms(y, mid - half, mid + half, level)
        ref = oracles.interval_score_loop(y, mid - half, mid + half, level)
        worst = max(worst, abs(np.mean(w + p) - ref) / max(1.0, abs(ref)))
    record(4, hand and worst < 1e-13, f"hand cases {a}, {b}, {c}; max decomposition err {worst:.1e}")


def test_c05_variance_scaling(study):
    written, secs, _ = study
    test = physical_rows(written["table2"], "test")
    m = [test[v] for v in ("1", "2", "3")]
    ratios = [m[0] / m[1], m[1] / m[2]]
    ok = m[0] > m[1] > m[2] and all(5 <= r <= 20 for r in ratios) and secs < 20 * 60
    record(5, ok, f"test MSE {m[0]:.2f} -> {m[1]:.3f} -> {m[2]:.4f}, ratios "
                  f"{ratios[0]:.1f}, {ratios[1]:.1f}, {secs / 60:.1f} min")


def test_c06_no_overfitting(study):
    written, _, _ = study
    train = physical_rows(written["table2"], "train")
    test = physical_rows(written["table2"], "test")
    gaps = {v: abs(train[v] - test[v]) / train[v] for v in ("1", "2", "3")}
    ok = all(g <= 0.15 for g in gaps.values())
    record(6, ok, "relative train/test gap " + ", ".join(f"s{v} {g:.3f}" for v, g in gaps.items()))


def test_c07_ar1_fidelity():
    cfg = ScenarioConfig(GridSpec((0, 1, 0, 1), 10, 5), GlobalParams(0.0, (), 1.0),
                         RegionalParams(0.0, (), KernelParams("matern", 0.2, 1.0, 1.0), (), 1e-6,
                                        TemporalStructure("ar1", 0.8)), T=200, seed=7)
    a = simulate_scenario(cfg).components["alpha_r"]
    lags = []
    for w in range(0, 100, 2):
        x = a[:, w] - a[:, w].mean()
        lags.append(np.dot(x[1:], x[:-1]) / np.dot(x, x))
    avg = float(np.mean(lags))
    record(7, abs(avg - 0.8) <= 0.05, f"mean lag-1 autocorrelation {avg:.4f} over 50 locations, T=200")


def test_c08_prediction_oracle():
    rng = np.random.default_rng(8)
    worst_m = worst_v = 0.0
    for i in range(20):
        model, params, Y, X = random_instance(rng, 200, kind=KINDS[i % len(KINDS)])
        n_new = min(2, max(1, (300 - Y.T * Y.n) // Y.n))
        t_new = Y.times.max() + 1 + np.arange(n_new)
        X_new = rng.normal(size=(n_new, Y.n, model.q)) if model.q else None
        times = np.r_[Y.times, t_new]
        Xall = None if X is None else np.concatenate([X, X_new])
        sig = oracles.sigma_y(Y.domain.locations, times, params.theta0, params.theta1, params.tau_sq,
                              params.rho_ar if model.ar1 else 0.0, Xall)
        mean = oracles.mean_vector(params.beta, len(times), Y.n, Xall)
        N = Y.T * Y.n
        y = np.r_[Y.values.ravel(), np.zeros(n_new * Y.n)]
        mu, var = oracles.conditional(mean, sig, y, np.arange(N), np.arange(N, len(times) * Y.n))
        fit = FitResult(params, 0.0, 1, True, 0.0, "ml-exact", model)
        pred = predict_response(fit, Y, t_new, X_train=X, X_target=X_new, mean_uncertainty=False)
        worst_m = max(worst_m, float(np.max(np.abs(pred.mean.ravel() - mu))))
        worst_v = max(worst_v, float(np.max(np.abs(pred.sd.ravel() ** 2 - var))))
    record(8, worst_m <= 1e-8 and worst_v <= 1e-8,
           f"max abs err mean {worst_m:.1e}, variance {worst_v:.1e} over 20 instances")


def test_c09_nugget_recovery():
    domain = SpatialDomain.lattice((0, 1, 0, 1), 20, 10)
    model = ModelSpec.preset("M1", "exponential", 0.5)
    prior = PriorSpec(range_median=domain.diameter / 2)
    covered, ratios = 0, []
    for r in range(20):
        rng = np.random.default_rng(900 + r)
        Y = SpaceTimeField(rng.normal(0.0, 1.0, size=(10, domain.n)), domain)
        post = mcmc_fit(model, Y, prior=prior, config=ChainConfig(4000, 2000, seed=r))
        row = next(s for s in posterior_summary(post) if s.name == "tau_sq")
        covered += row.lower <= 1.0 <= row.upper
        ratios.append(fit_ml(model, Y).estimates.tau_sq / Y.values.var(ddof=1))
    worst = max(abs(x - 1) for x in ratios)
    record(9, covered >= 16 and worst <= 0.10,
           f"tau_sq interval covers truth in {covered}/20; ML/sample variance in "
           f"[{min(ratios):.3f}, {max(ratios):.3f}]")


def test_c10_mcmc_calibration():
    rng = np.random.default_rng(10)
    d = SpatialDomain.lattice((0, 1, 0, 1), 5)
    Y = SpaceTimeField(rng.normal(1.0, 0.5, size=(4, d.n)), d)
    tau_sq = 0.25
    cfg = ChainConfig(n_draws=50000, burn_in=5000, seed=10, fixed={"tau_sq": tau_sq})
    post = mcmc_fit(ModelSpec.preset("M0"), Y, prior=PriorSpec(fixed_sd=math.inf), config=cfg)
    b = post.draws[:, 0]
    sd = math.sqrt(tau_sq / Y.values.size)
    err_m = abs(b.mean() - Y.values.mean()) / abs(Y.values.mean())
    err_s = abs(b.std() - sd) / sd
    ok = err_m <= 0.02 and err_s <= 0.02 and 0.15 <= post.acceptance_rate <= 0.4
    record(10, ok, f"posterior mean err {err_m:.2%}, sd err {err_s:.2%}, "
                   f"acceptance {post.acceptance_rate:.3f}")


def test_c11_pc_prior_calibration():
    p = PriorSpec(range_median=700.0, sd0=0.32, sd_prob=0.01)
    below = integrate.quad(lambda r: math.exp(log_range_prior(p, r)), 0, 700, limit=200)[0]
    tail = integrate.quad(lambda s: math.exp(log_sd_prior(p, s)), 0.32, np.inf)[0]
    ok = abs(below - 0.5) <= 1e-4 and abs(tail - 0.01) <= 1e-4
    record(11, ok, f"P[range < 700] = {below:.8f}, P[sd > 0.32] = {tail:.8f}")


def test_c12_reproducibility(study):
    written, _, root = study
    again = run_study(STUDY, root / "second")
    same = all(written[k].read_bytes() == again[k].read_bytes() for k in ("table2", "cells"))
    rows = read_table2(written["table2"])
    with open(written["table2"]) as fh:
        head2 = fh.readline().strip().split(",")
    with open(written["table3"]) as fh:
        lines3 = fh.read().splitlines()
    schema = (head2 == table2_header(0.95) and len(rows) == 3 * 2 * 2
              and lines3[0].split(",") == TABLE3_HEADER and len(lines3) == 1 + 3)
    record(12, same and schema, f"byte-identical table2/cells: {same}; schema ok: {schema}")
