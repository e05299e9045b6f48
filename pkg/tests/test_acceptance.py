"""Acceptance criteria, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line with the measured numbers
before asserting, so ``pytest -v`` output doubles as the acceptance report.
The statistical experiments (7 to 11) are marked ``slow``.
"""

import math
import os
import time

import numpy as np
import pytest
from scipy import integrate, stats

from htbnn.bench import ExperimentConfig, run_experiment
from htbnn.constructor import (ApproxConfig, Target, in_margin_set, indicator_net, mult_net,
                               test_net, wide_net)
from htbnn.data import RegressionData, curve, design, gen_data, get_fixture, minkowski_estimate
from htbnn.divergences import (DesignSample, clip_factor, kl_regression, kl_variance, l2_px, renyi)
from htbnn.mcmc import TemperConfig, log_tempered_posterior, run_chain
from htbnn.network import Architecture, Network, forward, param_count, propagation_bound
from htbnn.prior import Prior, ScalingSchedule, cauchy, certify, gaussian, student
from htbnn.vb import (VariationalState, VBConfig, coordinate_kl, fit_vb, kl_quadrature,
                      objective_on_bank, oracle_q_star, pac_bound, vb_objective)


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return emit


# -- 1 -----------------------------------------------------------------------

def test_criterion_01_multiplication(verdict):
    t0 = time.time()
    g = np.linspace(-1, 1, 400)
    X, Y = np.meshgrid(g, g)
    P = np.column_stack([X.ravel(), Y.ravel()])
    worst = []
    for R in range(1, 9):
        err = float(np.max(np.abs(forward(mult_net(R), P)[:, 0] - P[:, 0] * P[:, 1])))
        worst.append(err / 4.0 ** -R)
    dt = time.time() - t0
    ok = max(worst) <= 1.0 and dt < 10
    verdict(1, ok, f"max error / 4^-R over R=1..8: {max(worst):.3f}; {dt:.1f} s")


# -- 2 -----------------------------------------------------------------------

def test_criterion_02_indicator_and_test_nets(verdict):
    t0 = time.time()
    rng = np.random.default_rng(2)
    exact_bad = global_bad = points = 0
    for _ in range(10_000):
        d = int(rng.integers(1, 4))
        R = float(rng.uniform(4, 20))
        a = rng.uniform(-1, 1 - 2 / R, d)
        b = np.minimum(a + 2 / R + rng.uniform(0, 1, d), 1.0)
        s = float(rng.uniform(-R, R))
        x = rng.uniform(-1.2, 1.2, size=(4, d))
        inside = np.all((x >= a) & (x < b), axis=1).astype(float)
        ind = forward(indicator_net(a, b, R), x)[:, 0]
        tst = forward(test_net(a, b, s, R), x)[:, 0]
        margin = in_margin_set(x, a, b, R)
        exact_bad += int(np.sum(margin & ((ind != inside) | (tst != s * inside))))
        global_bad += int(np.sum((np.abs(ind - inside) > 1) | (np.abs(tst - s * inside) > abs(s))))
        points += x.shape[0]
    dt = time.time() - t0
    ok = exact_bad == 0 and global_bad == 0 and dt < 10
    verdict(2, ok, f"10^4 cubes, {points} points: {exact_bad} inexact on the margin set, "
                   f"{global_bad} beyond the global bound; {dt:.1f} s")


# -- 3 -----------------------------------------------------------------------

def test_criterion_03_wide_net(verdict):
    t0 = time.time()
    fix = get_fixture("holder1", d=1)
    target = Target(lambda X: fix(X))
    X = np.linspace(-1, 1, 20_001)[:, None]
    d, beta, F = 1, 1.0, 1.0
    errs, over = {}, []
    for M in (4, 8, 16):
        cfg = ApproxConfig(d=d, beta=beta, F=F, M=M)
        net = wide_net(target, cfg)
        errs[M] = float(np.max(np.abs(forward(net, X)[:, 0] - target.f(X))))
        B_M = math.ceil(M ** (2 * (beta + 1)))
        cap = max(2 * max(F, 1.0) * math.exp(2 * d), B_M ** 2)
        over.append(net.max_abs_coefficient() > cap)
    ratios = [errs[4] / errs[8], errs[8] / errs[16]]
    dt = time.time() - t0
    ok = all(3 <= r <= 5 for r in ratios) and not any(over) and dt < 120
    verdict(3, ok, f"sup-error ratios {ratios[0]:.3f} (M=4), {ratios[1]:.3f} (M=8); "
                   f"cap exceeded: {any(over)}; {dt:.1f} s")


# -- 4 -----------------------------------------------------------------------

def test_criterion_04_propagation(verdict):
    rng = np.random.default_rng(4)
    violations = 0
    for _ in range(1000):
        L = int(rng.integers(1, 5))
        widths = [int(rng.integers(1, 4))] + [int(rng.integers(1, 7)) for _ in range(L)] + [1]
        arch = Architecture.from_widths(widths)
        T = param_count(arch).T
        b = float(rng.uniform(0.1, 2.0))
        delta = float(rng.uniform(0, 1)) * b
        theta = rng.uniform(-b, b, T)
        other = np.clip(theta + rng.uniform(-delta, delta, T), -b, b)
        X = rng.uniform(size=(200, arch.d))
        gap = np.max(np.abs(forward(Network.from_vector(arch, theta), X)
                            - forward(Network.from_vector(arch, other), X)))
        violations += int(gap > propagation_bound(arch, delta, b))
    verdict(4, violations == 0, f"{violations} violations in 1000 pairs")


# -- 5 -----------------------------------------------------------------------

def _bounded_function(rng, d=2, M0=1.0):
    arch = Architecture.from_widths((d, 6, 1))
    net = Network.from_vector(arch, rng.normal(scale=2.0, size=param_count(arch).T))
    return lambda X: M0 * np.tanh(forward(net, X)[:, 0])


def test_criterion_05_divergences(verdict):
    rng = np.random.default_rng(5)
    des = DesignSample.uniform(2, 5000, rng)
    f = _bounded_function(rng)
    self_zero = all(renyi(f, f, a, des).value == 0.0 for a in (0.25, 0.5, 0.75))
    gap_err = max(abs(renyi(lambda X: np.full(X.shape[0], 0.3 + D), lambda X: np.full(X.shape[0], 0.3),
                            a, des).value - a * D * D / 2)
                  for a in (0.25, 0.5, 0.75) for D in (0.1, 1.0, 2.5))
    clip_bad, kl_bad = 0, 0
    for k in range(500):
        a = (0.25, 0.5, 0.75)[k % 3]
        f, g = _bounded_function(rng), _bounded_function(rng)
        d, l2 = renyi(f, g, a, des), l2_px(f, g, des)
        c = clip_factor(a, 1.0)
        clip_bad += int(d.value < c * l2.value - 3 * math.hypot(d.stderr, c * l2.stderr))
        kl_bad += int(kl_variance(f, g, des).value != 2 * kl_regression(f, g, des).value)
    ok = self_zero and gap_err <= 1e-9 and clip_bad == 0 and kl_bad == 0
    verdict(5, ok, f"D(f,f)=0: {self_zero}; constant-gap error {gap_err:.1e}; "
                   f"clip violations {clip_bad}/500; variance != 2 KL in {kl_bad}/500")


# -- 6 -----------------------------------------------------------------------

def test_criterion_06_prior_certification(verdict):
    t0 = time.time()
    c, s, g = certify(cauchy()), certify(student(3)), certify(gaussian())
    dt = time.time() - t0
    witness = bool(g.failures) and all("witness" in f for f in g.failures)
    ok = c.passed and s.passed and c.c2 <= 1 / math.pi + 1e-9 and not g.passed and witness and dt < 5
    verdict(6, ok, f"cauchy c1={c.c1:.4f} c2={c.c2:.6f} (1/pi={1 / math.pi:.6f}); student(3) "
                   f"passed={s.passed}; gaussian failed={not g.passed} with witness={witness}; {dt:.1f} s")


# -- 7 -----------------------------------------------------------------------

TOY_ARCH = Architecture.from_widths((1, 1, 1))
TOY_DATA = RegressionData(np.array([[0.1], [0.5], [0.9]]), np.array([1.2, 2.5, 0.7]))


def _toy_mean(prior, data=TOY_DATA, alpha=0.5):
    f = lambda t: math.exp(log_tempered_posterior(Network.from_vector(TOY_ARCH, [0, 0, t, 0]),
                                                  data, alpha, prior))
    Z = integrate.quad(f, -50, 50, points=[1.5], limit=200)[0]
    return integrate.quad(lambda t: t * f(t), -50, 50, points=[1.5], limit=200)[0] / Z


def _two_parameter_tv():
    # y = theta_2 + theta_3 x: the hidden unit is pinned to relu(x) = x on [0, 1]
    data = RegressionData(np.linspace(0.1, 0.9, 5)[:, None], np.array([0.2, 1.1, 0.9, 1.6, 1.4]))
    prior = Prior(cauchy(), ScalingSchedule.fixed(0.0))
    alpha = 0.5
    g2, g3 = np.linspace(-6, 8, 1401), np.linspace(-10, 12, 1401)
    A, B = np.meshgrid(g2, g3, indexing="ij")
    x = data.X[:, 0]
    sse = sum((data.Y[i] - A - B * x[i]) ** 2 for i in range(data.n))
    lp = -0.5 * alpha * sse + cauchy().logpdf(A) + cauchy().logpdf(B)
    w = np.exp(lp - lp.max())
    w /= w.sum()
    res = run_chain(data, TOY_ARCH, prior, TemperConfig(alpha=alpha, steps=1_000_000, burnin=5000, seed=7),
                    init=np.array([0.0, 1.0, 0.0, 0.0]), free=[2, 3])
    S = res.samples[:, 2:4]
    # 20 x 20 cells at the exact marginal quantiles, plus the outer rows and columns
    q = np.linspace(0.005, 0.995, 21)
    e2 = np.interp(q, np.cumsum(w.sum(axis=1)), g2)
    e3 = np.interp(q, np.cumsum(w.sum(axis=0)), g3)

    def cells(a, b, weights=None):
        idx = np.searchsorted(e2, a, side="right") * 22 + np.searchsorted(e3, b, side="right")
        return np.bincount(idx.ravel(), weights=None if weights is None else weights.ravel(), minlength=22 * 22)

    exact = cells(A, B, w)
    chain = cells(S[:, 0], S[:, 1]) / S.shape[0]
    return 0.5 * float(np.abs(exact - chain).sum())


@pytest.mark.slow
def test_criterion_07_mcmc_stationarity(verdict):
    t0 = time.time()
    prior = Prior(cauchy(), ScalingSchedule.fixed(0.0))
    res = run_chain(TOY_DATA, TOY_ARCH, prior, TemperConfig(steps=200_000, burnin=2000, seed=1),
                    init=np.zeros(4), free=[2])
    mean_gap = abs(res.samples[:, 2].mean() - _toy_mean(prior))
    tv = _two_parameter_tv()
    arch = Architecture.from_widths((1, 2, 1))
    zprior = Prior(cauchy(), ScalingSchedule.fixed([0.0, 1.0, 0.5, 0.0, 2.0, 0.0, 0.3]))
    zres = run_chain(RegressionData.empty(1), arch, zprior,
                     TemperConfig(steps=100_000, burnin=1000, thin=10, seed=4))
    L = zprior.log_inv_sigma(arch)
    ks = max(stats.kstest(zres.samples[:, k] * math.exp(L[k]), stats.cauchy.cdf).statistic
             for k in range(param_count(arch).T))
    dt = time.time() - t0
    ok = mean_gap <= 0.02 and tv < 0.05 and ks < 0.05 and dt < 300
    verdict(7, ok, f"1-parameter mean gap {mean_gap:.4f}; 2-parameter TV {tv:.4f}; "
                   f"zero-data max KS {ks:.4f} on {zres.samples.shape[0]} draws; {dt:.1f} s")


# -- 8 -----------------------------------------------------------------------

def _gradient_error():
    arch = Architecture.from_widths((1, 3, 1))
    rng = np.random.default_rng(1)
    X = rng.uniform(size=(30, 1))
    data = RegressionData(X, np.sin(4 * X[:, 0]) + 0.3 * rng.standard_normal(30))
    state = VariationalState(arch, rng.normal(size=10), np.full(10, -1.0), student(3))
    prior = Prior(student(3), ScalingSchedule.fixed(0.0))
    bank = student(3).sample(np.random.default_rng(2), (8, 10))
    est = vb_objective(state, data, 0.5, prior, zeta=bank)
    grad = np.concatenate([est.grad_mu, est.grad_log_s])
    fd = np.zeros(20)
    for k in range(20):
        for sign in (1, -1):
            s2 = state.copy()
            (s2.mu if k < 10 else s2.log_s)[k % 10] += sign * 1e-4
            fd[k] += sign * vb_objective(s2, data, 0.5, prior, zeta=bank).value / 2e-4
    return float(np.linalg.norm(grad - fd) / np.linalg.norm(fd))


def _kl_shape():
    """Worst ratio KL / (C (1 + log(1 + 2u))) and the large-u growth per decade over C ln 10."""
    worst, growth = 0.0, []
    for p, C in ((cauchy(), 2.0), (student(3), 4.0)):
        us = np.logspace(-3, 8, 23)
        kl = np.array([coordinate_kl(student(3), float(u), 1.0, p) for u in us])
        worst = max(worst, float(np.max(kl / (C * (1 + np.log1p(2 * us))))))
        growth.append(float((kl[-1] - kl[-3]) / (C * math.log(10.0))))
    return worst, growth


@pytest.mark.slow
def test_criterion_08_vb(verdict):
    t0 = time.time()
    rel = _gradient_error()
    fix = get_fixture("holder1", d=1)
    n, alpha = 512, 0.5
    oracle_net = wide_net(Target(lambda X: fix(X)), ApproxConfig(d=1, beta=1.0, F=1.0, M=2))
    prior = Prior(cauchy(), ScalingSchedule("directed", n=n))
    # Q = prior needs the prior inside the variational family
    same = Prior(student(3), ScalingSchedule("directed", n=n))
    at_prior = float(kl_quadrature(VariationalState.from_prior(oracle_net.arch, same), same).sum())
    data = gen_data(fix, design("uniform", 1), n, np.random.default_rng(8))
    fitted, _ = fit_vb(data, oracle_net.arch, prior, alpha, VBConfig(steps=500, seed=8), h=student(3))
    oracle = oracle_q_star(oracle_net, prior, student(3))
    of = objective_on_bank(fitted, data, alpha, prior).value
    oq = objective_on_bank(oracle, data, alpha, prior).value
    worst, growth = _kl_shape()
    dt = time.time() - t0
    ok = (rel < 1e-3 and at_prior == 0.0 and of <= oq and worst <= 1.0
          and all(abs(g - 1.0) <= 0.01 for g in growth) and dt < 300)
    verdict(8, ok, f"gradient rel. error {rel:.2e}; KL at prior {at_prior}; objective fitted {of:.4g} "
                   f"<= oracle {oq:.4g}; KL / bound <= {worst:.3f}, large-u growth / C "
                   f"{growth[0]:.6f}, {growth[1]:.6f}; {dt:.1f} s")


# -- 9 -----------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_09_rate(verdict):
    t0 = time.time()
    cfg = ExperimentConfig(fixture="additive", fixture_params={"profile": "tent"},
                           n_grid=(128, 256, 512, 1024, 2048, 4096), replications=5,
                           prior_family="cauchy", schedule="directed", method="mcmc",
                           arch_mode="override", widths=(4, 12, 12, 1), steps=2000, burnin=2000,
                           thin=10, workers=os.cpu_count() or 1)
    rep = run_experiment(cfg)
    dt = time.time() - t0
    m = rep.summary["mcmc"]
    target = rep.exponents["smoothness"]
    ok = (not rep.partial and m["monotone"] and abs(m["slope"] + target) <= 0.15 and dt < 7200)
    means = ", ".join(f"{e:.4f}" for e in m["mean_error"])
    verdict(9, ok, f"MCMC slope {m['slope']:.4f} (CI {m['slope_ci'][0]:.3f}, {m['slope_ci'][1]:.3f}) vs "
                   f"-{target:.4f} +-0.15; monotone {m['monotone']}; mean errors [{means}]; "
                   f"{dt / 60:.1f} min on {cfg.workers} worker(s)")


# -- 10 ----------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_10_minkowski(verdict):
    t0 = time.time()
    errs = {}
    for name in ("helix", "uniform"):
        cfg = ExperimentConfig(fixture="manifold", design=name, n_grid=(2048,), replications=5,
                               prior_family="cauchy", arch_mode="override", widths=(3, 12, 12, 1),
                               steps=2000, burnin=2000, thin=10, workers=os.cpu_count() or 1)
        m = run_experiment(cfg).summary["mcmc"]
        errs[name] = (m["mean_error"][0], m["stderr"][0])
    gap = errs["uniform"][0] - errs["helix"][0]
    sep = 2 * math.hypot(errs["uniform"][1], errs["helix"][1])
    dim = minkowski_estimate(curve("helix").sample(100_000, np.random.default_rng(10)))
    ok = gap > sep and abs(dim - 1.0) <= 0.2
    verdict(10, ok, f"n=2048 error helix {errs['helix'][0]:.4f}+-{errs['helix'][1]:.4f}, uniform "
                    f"{errs['uniform'][0]:.4f}+-{errs['uniform'][1]:.4f} (gap {gap:.4f} vs 2 stderr "
                    f"{sep:.4f}); box-counting dimension {dim:.3f}; {time.time() - t0:.0f} s")


# -- 11 ----------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_11_pac_monitor(verdict):
    t0 = time.time()
    fix = get_fixture("holder1", d=1)
    n, alpha = 512, 0.5
    oracle_net = wide_net(Target(lambda X: fix(X)), ApproxConfig(d=1, beta=1.0, F=1.0, M=2))
    prior = Prior(cauchy(), ScalingSchedule("directed", n=n))
    oracle = oracle_q_star(oracle_net, prior, student(3))
    des = DesignSample.uniform(1, 2000, np.random.default_rng(11))
    at_oracle = pac_bound(oracle, fix, des, alpha, n, prior)
    bad = {"fitted": 0, "oracle": 0, "fitted vs oracle bound": 0}
    gaps = []
    for rep in range(10):
        data = gen_data(fix, design("uniform", 1), n, np.random.default_rng([11, rep]))
        fitted, _ = fit_vb(data, oracle_net.arch, prior, alpha, VBConfig(steps=500, seed=rep), h=student(3))
        pf = pac_bound(fitted, fix, des, alpha, n, prior, rng=np.random.default_rng(rep))
        bad["fitted"] += int(not pf.holds)
        bad["oracle"] += int(not at_oracle.holds)
        bad["fitted vs oracle bound"] += int(pf.expected_renyi > at_oracle.bound)
        gaps.append(pf.bound - pf.expected_renyi)
    rate = max(bad.values()) / 10
    verdict(11, rate <= 0.1,
            f"violations over 10 datasets {bad}; fitted slack min {min(gaps):.3g}; oracle E D "
            f"{at_oracle.expected_renyi:.4g} <= bound {at_oracle.bound:.4g}; {time.time() - t0:.0f} s")
