import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from htbnn.divergences import (DesignSample, clip_factor, kl_regression, kl_variance, l2_px,
                               renyi, renyi_from_gap)
from htbnn.network import Architecture, Network, forward, param_count

ALPHAS = [0.25, 0.5, 0.75]


def const(c):
    return lambda X: np.full(X.shape[0], float(c))


def random_bounded(rng, d=2, M0=1.0):
    """M0 * tanh of a small random ReLU network."""
    arch = Architecture.from_widths((d, 6, 1))
    net = Network.from_vector(arch, rng.normal(scale=2.0, size=param_count(arch).T))
    return lambda X: M0 * np.tanh(forward(net, X)[:, 0])


@pytest.fixture(scope="module")
def design():
    return DesignSample.uniform(2, 20_000, np.random.default_rng(0))


class TestDesignSample:
    def test_rejects_points_outside(self):
        with pytest.raises(ValueError):
            DesignSample(np.array([[0.5, 1.2]]))

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            DesignSample(np.zeros((0, 2)))

    def test_count(self, design):
        assert design.m == 20_000


class TestL2:
    def test_equal_functions(self, design):
        f = random_bounded(np.random.default_rng(1))
        assert l2_px(f, f, design).value == 0.0

    def test_constant_gap(self, design):
        assert l2_px(const(1), const(0), design).value == 1.0

    def test_identity_against_zero(self):
        des = DesignSample.uniform(1, 100_000, np.random.default_rng(2))
        e = l2_px(lambda X: X[:, 0], const(0), des)
        assert abs(e.value - 1 / 3) <= 3 * e.stderr

    def test_network_argument(self, design):
        arch = Architecture.from_widths((2, 1, 1))
        net = Network.from_vector(arch, [0, 0, 0, 2.0, 0])
        assert l2_px(net, const(2.0), design).value == 0.0


class TestKL:
    def test_zero(self, design):
        assert kl_regression(const(0.3), const(0.3), design).value == 0.0

    def test_constant_gap(self, design):
        assert kl_regression(const(0), const(1), design).value == 0.5

    def test_identity_against_zero(self):
        des = DesignSample.uniform(1, 100_000, np.random.default_rng(3))
        e = kl_regression(const(0), lambda X: X[:, 0], des)
        assert abs(e.value - 1 / 6) <= 3 * e.stderr

    def test_variance_is_twice_kl(self, design):
        rng = np.random.default_rng(4)
        for _ in range(100):
            f, g = random_bounded(rng), random_bounded(rng)
            assert kl_variance(f, g, design).value == 2 * kl_regression(f, g, design).value

    def test_variance_values(self, design):
        assert kl_variance(const(0), const(0), design).value == 0.0
        assert kl_variance(const(0), const(1), design).value == 1.0


class TestRenyi:
    def test_self_divergence_is_zero(self, design):
        f = random_bounded(np.random.default_rng(5))
        for a in ALPHAS:
            assert renyi(f, f, a, design).value == 0.0

    @pytest.mark.parametrize("alpha", ALPHAS)
    @pytest.mark.parametrize("gap", [0.1, 1.0, 2.5])
    def test_constant_gap(self, design, alpha, gap):
        assert abs(renyi(const(gap), const(0), alpha, design).value - alpha * gap ** 2 / 2) <= 1e-9

    @pytest.mark.parametrize("gap", [1e-12, 1e-6, 1e3, 1e8])
    def test_extreme_gaps(self, gap):
        # constant gaps far below rounding of exp and far past its underflow
        got = renyi_from_gap(np.full(50, gap), 0.5).value
        assert got == pytest.approx(0.5 * gap ** 2 / 2, rel=1e-9)

    def test_half_order_unit_gap(self, design):
        assert renyi(const(1), const(0), 0.5, design).value == pytest.approx(0.25, abs=1e-12)

    @pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, 1.5])
    def test_domain(self, design, alpha):
        with pytest.raises(ValueError):
            renyi(const(1), const(0), alpha, design)

    def test_symmetric(self, design):
        rng = np.random.default_rng(6)
        for _ in range(20):
            f, g = random_bounded(rng), random_bounded(rng)
            a = float(rng.uniform(0.05, 0.95))
            assert renyi(f, g, a, design).value == renyi(g, f, a, design).value

    def test_nonnegative(self, design):
        rng = np.random.default_rng(7)
        for _ in range(50):
            f, g = random_bounded(rng), random_bounded(rng)
            e = renyi(f, g, 0.5, design)
            assert e.value >= -3 * e.stderr

    @given(st.lists(st.floats(-20, 20), min_size=2, max_size=50), st.floats(0.01, 0.99))
    def test_gap_form_bounds(self, gap, alpha):
        gap = np.asarray(gap)
        v = renyi_from_gap(gap, alpha).value
        # Jensen: between the constant-gap value at the mean square and zero
        assert -1e-12 <= v <= alpha * np.mean(gap ** 2) / 2 + 1e-9

    @pytest.mark.parametrize("alpha", ALPHAS)
    def test_clipping_lower_bound(self, alpha):
        rng = np.random.default_rng(int(alpha * 100))
        des = DesignSample.uniform(2, 5000, rng)
        c = clip_factor(alpha, 1.0)
        assert c == pytest.approx(alpha / 2 * math.exp(-2 * alpha * (1 - alpha)))
        for _ in range(100):
            f, g = random_bounded(rng), random_bounded(rng)
            d = renyi(f, g, alpha, des)
            l2 = l2_px(f, g, des)
            assert d.value >= c * l2.value - 3 * math.hypot(d.stderr, c * l2.stderr)
