import math

import numpy as np
import pytest
from scipy import integrate, stats

from htbnn import kernels
from htbnn.data import RegressionData
from htbnn.mcmc import (ChainResult, TemperConfig, load_chain, log_tempered_posterior,
                        posterior_predict, run_chain, save_chain, split_rhat)
from htbnn.network import Architecture, Network, param_count
from htbnn.prior import Prior, ScalingSchedule, cauchy, custom, gaussian, student

ALPHA = 0.5
TOY_ARCH = Architecture.from_widths((1, 1, 1))   # coefficient 2 is the output shift
TOY_DATA = RegressionData(np.array([[0.1], [0.5], [0.9]]), np.array([1.2, 2.5, 0.7]))
SHIFT = [2]


def toy_net(t):
    return Network.from_vector(TOY_ARCH, [0.0, 0.0, t, 0.0])


def batch_stderr(x, batches=50):
    means = np.array([b.mean() for b in np.array_split(x, batches)])
    return means.std(ddof=1) / math.sqrt(batches)


def small_problem(seed=0, n=40):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, 2))
    Y = np.sin(3 * X[:, 0]) + rng.standard_normal(n)
    arch = Architecture.from_widths((2, 5, 4, 1))
    return RegressionData(X, Y), arch, Prior(student(3), ScalingSchedule("directed", n=n))


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(alpha=0.0), dict(alpha=1.0), dict(steps=0), dict(burnin=-1),
                                    dict(thin=0), dict(refresh_prob=1.5), dict(scale=0.0)])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            TemperConfig(**kw)


class TestLogPosterior:
    def test_interpolating_net(self):
        prior = Prior(cauchy(), ScalingSchedule.fixed(0.0))
        data = RegressionData(np.array([[0.2], [0.7]]), np.array([1.5, 1.5]))
        net = toy_net(1.5)
        assert log_tempered_posterior(net, data, ALPHA, prior) == prior.logpdf(net.to_vector(), TOY_ARCH)

    def test_small_alpha_limit(self):
        prior = Prior(cauchy(), ScalingSchedule.fixed(0.0))
        net = toy_net(0.3)
        gap = log_tempered_posterior(net, TOY_DATA, 1e-8, prior) - prior.logpdf(net.to_vector(), TOY_ARCH)
        assert abs(gap) < 1e-6

    def test_monotone_in_residuals(self):
        prior = Prior(cauchy(), ScalingSchedule.fixed(0.0))
        net = toy_net(1.0)
        near = RegressionData(TOY_DATA.X, np.array([1.0, 1.1, 0.9]))
        far = RegressionData(TOY_DATA.X, np.array([1.0, 2.1, -0.9]))
        assert log_tempered_posterior(net, near, ALPHA, prior) > log_tempered_posterior(net, far, ALPHA, prior)

    def test_empty_data(self):
        prior = Prior(cauchy(), ScalingSchedule.fixed(0.0))
        assert log_tempered_posterior(toy_net(2.0), RegressionData.empty(1), ALPHA, prior) == \
            prior.logpdf(toy_net(2.0).to_vector(), TOY_ARCH)


def quadrature_mean(prior):
    f = lambda t: math.exp(log_tempered_posterior(toy_net(t), TOY_DATA, ALPHA, prior))
    Z = integrate.quad(f, -50, 50, points=[1.5], limit=200)[0]
    return integrate.quad(lambda t: t * f(t), -50, 50, points=[1.5], limit=200)[0] / Z


class TestToyChains:
    def test_one_parameter_mean(self):
        prior = Prior(cauchy(), ScalingSchedule.fixed(0.0))
        res = run_chain(TOY_DATA, TOY_ARCH, prior, TemperConfig(steps=200_000, burnin=2000, seed=1),
                        init=np.zeros(4), free=SHIFT)
        assert abs(res.samples[:, 2].mean() - quadrature_mean(prior)) < 0.02
        assert 0.1 <= res.accept_rw <= 0.6

    def test_gaussian_conjugacy(self):
        prior = Prior(gaussian(), ScalingSchedule.fixed(0.0))
        n = TOY_DATA.n
        prec = 1.0 + ALPHA * n
        mean = ALPHA * TOY_DATA.Y.sum() / prec
        res = run_chain(TOY_DATA, TOY_ARCH, prior, TemperConfig(steps=100_000, burnin=2000, seed=2),
                        init=np.zeros(4), free=SHIFT)
        x = res.samples[:, 2]
        assert abs(x.mean() - mean) <= 3 * batch_stderr(x)
        assert x.var() == pytest.approx(1 / prec, rel=0.05)

    def test_band_coverage(self):
        # mass of the exact tempered posterior inside the chain's 5-95% band
        prior = Prior(gaussian(), ScalingSchedule.fixed(0.0))
        rng = np.random.default_rng(3)
        cover = []
        for rep in range(10):
            Y = 1.0 + rng.standard_normal(3)
            data = RegressionData(TOY_DATA.X, Y)
            prec = 1.0 + ALPHA * 3
            exact = stats.norm(ALPHA * Y.sum() / prec, 1 / math.sqrt(prec))
            res = run_chain(data, TOY_ARCH, prior, TemperConfig(steps=20_000, burnin=1000, seed=rep),
                            init=np.zeros(4), free=SHIFT)
            band = posterior_predict(res, np.array([[0.5]]), B=100.0)
            cover.append(exact.cdf(band.upper[0]) - exact.cdf(band.lower[0]))
        assert abs(np.mean(cover) - 0.9) <= 0.05

    def test_zero_data_matches_prior(self):
        arch = Architecture.from_widths((1, 2, 1))
        prior = Prior(cauchy(), ScalingSchedule.fixed([0.0, 1.0, 0.5, 0.0, 2.0, 0.0, 0.3]))
        res = run_chain(RegressionData.empty(1), arch, prior, TemperConfig(steps=20_000, burnin=500, seed=4))
        L = prior.log_inv_sigma(arch)
        for k in range(param_count(arch).T):
            ks = stats.kstest(res.samples[:, k] * math.exp(L[k]), stats.cauchy.cdf).statistic
            assert ks < 0.05


class TestSampler:
    def test_same_seed_same_trajectory(self):
        data, arch, prior = small_problem()
        cfg = TemperConfig(steps=100, burnin=50, seed=7)
        a = run_chain(data, arch, prior, cfg)
        b = run_chain(data, arch, prior, cfg)
        assert np.array_equal(a.samples, b.samples) and np.array_equal(a.log_post, b.log_post)

    @pytest.mark.skipif("cython" not in kernels.available(), reason="compiled kernels not built")
    def test_backends_agree(self):
        data, arch, prior = small_problem(1)
        a = run_chain(data, arch, prior, TemperConfig(steps=60, burnin=40, seed=3, backend="cython"))
        b = run_chain(data, arch, prior, TemperConfig(steps=60, burnin=40, seed=3, backend="python"))
        assert np.array_equal(a.samples, b.samples)
        assert a.backend == "cython" and b.backend == "python"

    def test_cached_log_posterior(self):
        data, arch, prior = small_problem(2)
        res = run_chain(data, arch, prior, TemperConfig(steps=200, burnin=100, seed=5, thin=10))
        state = res.final_states[0]
        assert abs(state.log_post - state.recompute(arch, data, ALPHA, prior)) <= 1e-9 * max(1, abs(state.log_post))
        for k in range(0, len(res), 5):
            exact = log_tempered_posterior(Network.from_vector(arch, res.samples[k]), data, ALPHA, prior)
            assert res.log_post[k] == pytest.approx(exact, rel=1e-9, abs=1e-9)

    def test_thinning_and_chains(self):
        data, arch, prior = small_problem(3)
        res = run_chain(data, arch, prior, TemperConfig(steps=100, burnin=10, thin=5, chains=3, seed=1))
        assert len(res) == 60 and sorted(set(res.chain_id.tolist())) == [0, 1, 2]
        assert math.isfinite(res.rhat) and math.isfinite(res.rhat_log_post)

    def test_frozen_coordinates(self):
        data, arch, prior = small_problem(4)
        init = prior.sample_vector(arch, np.random.default_rng(0))
        res = run_chain(data, arch, prior, TemperConfig(steps=50, burnin=10), init=init, free=[0, 5])
        others = np.setdiff1d(np.arange(init.size), [0, 5])
        assert np.all(res.samples[:, others] == init[others])

    def test_free_needs_init(self):
        data, arch, prior = small_problem()
        with pytest.raises(ValueError):
            run_chain(data, arch, prior, TemperConfig(steps=5, burnin=0), free=[0])

    def test_reinitialises_overflowing_start(self):
        prior = Prior(cauchy(), ScalingSchedule.fixed(0.0))
        res = run_chain(TOY_DATA, TOY_ARCH, prior, TemperConfig(steps=10, burnin=0, seed=0),
                        init=np.array([0.0, 0.0, 1e300, 0.0]))
        assert res.reinit >= 1 and np.all(np.isfinite(res.log_post))

    def test_gives_up_without_finite_start(self):
        dead = custom(lambda x: np.zeros_like(x), logpdf=lambda x: np.full(np.shape(x), -np.inf),
                      sampler=lambda rng, size: rng.standard_normal(size))
        with pytest.raises(RuntimeError):
            run_chain(TOY_DATA, TOY_ARCH, Prior(dead, ScalingSchedule.fixed(0.0)), TemperConfig(steps=5))

    def test_custom_family_uses_python(self):
        lap = custom(lambda x: 0.5 * np.exp(-np.abs(x)), logpdf=lambda x: math.log(0.5) - np.abs(x),
                     sampler=lambda rng, size: rng.laplace(size=size))
        res = run_chain(TOY_DATA, TOY_ARCH, Prior(lap, ScalingSchedule.fixed(0.0)),
                        TemperConfig(steps=200, burnin=50), init=np.zeros(4), free=SHIFT)
        assert res.backend == "python"


class TestSplitRhat:
    def test_stationary_near_one(self):
        x = np.random.default_rng(0).standard_normal((4000, 2))
        ids = np.repeat([0, 1], 2000)
        assert np.all(np.abs(split_rhat(x, ids) - 1) < 0.01)

    def test_detects_drift(self):
        x = np.linspace(0, 10, 2000) + np.random.default_rng(1).standard_normal(2000)
        assert split_rhat(x, np.zeros(2000))[0] > 1.5

    def test_short_chain(self):
        assert np.isnan(split_rhat(np.zeros(3), np.zeros(3))[0])


class TestPredict:
    def test_identical_samples_collapse(self):
        net = toy_net(0.7)
        pred = posterior_predict([net] * 5, np.array([[0.1], [0.9]]), B=2.0)
        assert np.all(pred.mean == 0.7) and np.all(pred.lower == 0.7) and np.all(pred.upper == 0.7)

    def test_saturation(self):
        X = np.array([[0.3], [0.8]])
        high = posterior_predict([toy_net(5.0), toy_net(7.0), toy_net(9.0)], X, B=1.0)
        assert np.all(high.mean == 1.0) and np.all(high.lower == 1.0) and np.all(high.upper == 1.0)
        low = posterior_predict([toy_net(-5.0), toy_net(-7.0)], X, B=1.0)
        assert np.all(low.mean == -1.0)
        mixed = posterior_predict([toy_net(5.0), toy_net(-7.0), toy_net(9.0)], X, B=1.0)
        assert mixed.mean[0] == pytest.approx(1 / 3)

    def test_empty(self):
        with pytest.raises(ValueError):
            posterior_predict([], np.zeros((1, 1)), B=1.0)
        with pytest.raises(ValueError):
            posterior_predict(np.zeros((0, 4)), np.zeros((1, 1)), B=1.0, arch=TOY_ARCH)

    def test_theta_matrix(self):
        thetas = np.array([[0, 0, 1.0, 0], [0, 0, 3.0, 0]])
        assert posterior_predict(thetas, np.array([[0.5]]), B=5.0, arch=TOY_ARCH).mean[0] == 2.0


def test_checkpoint_round_trip(tmp_path):
    data, arch, prior = small_problem(5)
    res = run_chain(data, arch, prior, TemperConfig(steps=30, burnin=10, seed=2))
    save_chain(res, tmp_path / "chain.npz")
    back = load_chain(tmp_path / "chain.npz")
    assert isinstance(back, ChainResult)
    assert back.arch == arch and np.array_equal(back.samples, res.samples)
    assert back.config == res.config and back.diagnostics == res.diagnostics
