import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from htbnn.constructor import mult_net
from htbnn.network import (Architecture, Network, StructuralError, clip, compose, depth_sync,
                           embed, enlarge, forward, from_bytes, load, param_count, parallelize,
                           propagation_bound, save, to_bytes, zeros)

widths_st = st.lists(st.integers(1, 5), min_size=3, max_size=6)


def random_net(arch, rng, scale=1.0):
    return Network.from_vector(arch, scale * rng.uniform(-1, 1, param_count(arch).T))


def brute_force_T(widths):
    # one node per unit, one edge per connection between consecutive layers, one shift per non-input unit
    nodes = [[(l, i) for i in range(w)] for l, w in enumerate(widths)]
    edges = sum(1 for l in range(len(widths) - 1) for _ in itertools.product(nodes[l], nodes[l + 1]))
    shifts = sum(len(layer) for layer in nodes[1:])
    return edges + shifts


class TestArchitecture:
    def test_rejects_wrong_length(self):
        with pytest.raises(StructuralError):
            Architecture(2, (1, 3, 1))

    def test_rejects_zero_width(self):
        with pytest.raises(StructuralError):
            Architecture(1, (1, 0, 1))

    def test_rejects_zero_depth(self):
        with pytest.raises(StructuralError):
            Architecture(0, (1, 1))


class TestParamCount:
    @pytest.mark.parametrize("widths,T,V", [((1, 2, 1), 7, 6), ((2, 3, 3, 1), 25, 48)])
    def test_closed_form(self, widths, T, V):
        pc = param_count(Architecture.from_widths(widths))
        assert (pc.T, pc.V) == (T, V)

    def test_matches_enumeration(self):
        assert param_count(Architecture.from_widths((1, 3, 3, 1))).T == brute_force_T((1, 3, 3, 1)) == 22

    @given(widths_st)
    def test_T_counts_stored_coefficients(self, widths):
        arch = Architecture.from_widths(widths)
        net = zeros(arch)
        stored = sum(W.size + v.size for W, v in net.layers)
        assert param_count(arch).T == stored == net.to_vector().size == brute_force_T(widths)


class TestOrdering:
    def test_shift_is_column_zero(self):
        arch = Architecture.from_widths((2, 2, 1))
        theta = np.arange(param_count(arch).T, dtype=float)
        net = Network.from_vector(arch, theta)
        W1, v1 = net.layers[0]
        assert v1.tolist() == [0.0, 3.0]
        assert W1.tolist() == [[1.0, 2.0], [4.0, 5.0]]
        W2, v2 = net.layers[1]
        assert v2.tolist() == [6.0] and W2.tolist() == [[7.0, 8.0]]

    @given(widths_st, st.integers(0, 2 ** 32 - 1))
    def test_vector_round_trip(self, widths, seed):
        arch = Architecture.from_widths(widths)
        theta = np.random.default_rng(seed).normal(size=param_count(arch).T)
        assert np.array_equal(Network.from_vector(arch, theta).to_vector(), theta)

    def test_wrong_length_vector(self):
        with pytest.raises(StructuralError):
            Network.from_vector(Architecture.from_widths((1, 2, 1)), np.zeros(6))

    def test_non_finite_rejected(self):
        with pytest.raises(StructuralError):
            Network.from_vector(Architecture.from_widths((1, 1, 1)), [0, np.nan, 0, 0])


class TestForward:
    def test_constant_output(self):
        arch = Architecture.from_widths((3, 4, 4, 1))
        theta = np.zeros(param_count(arch).T)
        theta[-5] = 2.5  # v of the output layer
        net = Network.from_vector(arch, theta)
        out = forward(net, np.random.default_rng(0).uniform(size=(50, 3)))
        assert np.all(out == 2.5)

    def test_single_relu(self):
        net = Network(Architecture.from_widths((1, 1, 1)),
                      [(np.array([[1.0]]), np.array([-0.5])), (np.array([[1.0]]), np.array([0.0]))])
        assert forward(net, np.array([0.25]))[0] == 0.0
        assert forward(net, np.array([0.75]))[0] == 0.25

    def test_mult_net_point(self):
        assert abs(forward(mult_net(3), np.array([0.5, 0.5]))[0] - 0.25) <= 4.0 ** -3

    def test_batch_matches_rows(self):
        rng = np.random.default_rng(1)
        net = random_net(Architecture.from_widths((2, 5, 3, 2)), rng)
        X = rng.uniform(size=(20, 2))
        assert np.array_equal(forward(net, X)[7], forward(net, X[7]))

    def test_dimension_mismatch(self):
        net = zeros(Architecture.from_widths((2, 3, 1)))
        with pytest.raises(StructuralError):
            forward(net, np.zeros(3))
        with pytest.raises(StructuralError):
            forward(net, np.zeros((4, 1)))

    @given(st.integers(1, 6), st.integers(0, 2 ** 32 - 1), st.floats(0, 1))
    def test_positive_homogeneity(self, width, seed, lam):
        rng = np.random.default_rng(seed)
        arch = Architecture.from_widths((2, width, 1))
        net = Network(arch, [(rng.uniform(0, 1, (width, 2)), np.zeros(width)),
                             (rng.uniform(0, 1, (1, width)), np.zeros(1))])
        x = rng.uniform(size=2)
        assert forward(net, lam * x)[0] == pytest.approx(lam * forward(net, x)[0], rel=1e-12, abs=1e-15)


class TestClip:
    @pytest.mark.parametrize("y,B,out", [(2, 1, 1), (-3, 1, -1), (0.5, 2, 0.5)])
    def test_values(self, y, B, out):
        assert clip(y, B) == out

    @given(st.floats(-1e6, 1e6), st.floats(1e-6, 1e6))
    def test_idempotent_and_bounded(self, y, B):
        c = clip(y, B)
        assert clip(c, B) == c and abs(c) <= B

    def test_bound_must_be_positive(self):
        with pytest.raises(ValueError):
            clip(1.0, 0.0)


class TestPropagation:
    def test_values(self):
        arch = Architecture.from_widths((1, 1, 1))
        assert propagation_bound(arch, 0.1, 1.0) == pytest.approx(0.8)
        assert propagation_bound(arch, 0.0, 3.0) == 0.0

    @given(widths_st, st.floats(0.1, 3.0), st.floats(0.0, 0.5), st.integers(0, 2 ** 32 - 1))
    def test_bound_holds(self, widths, b, frac, seed):
        rng = np.random.default_rng(seed)
        arch = Architecture.from_widths(widths)
        T = param_count(arch).T
        delta = frac * b
        theta = rng.uniform(-b, b, T)
        other = np.clip(theta + rng.uniform(-delta, delta, T), -b, b)
        X = rng.uniform(size=(500, arch.d))
        gap = np.max(np.abs(forward(Network.from_vector(arch, theta), X)
                            - forward(Network.from_vector(arch, other), X)))
        assert gap <= propagation_bound(arch, delta, b)


def identity_net(k=1):
    eye = np.eye(k)
    return Network(Architecture.from_widths((k, 2 * k, k)),
                   [(np.vstack([eye, -eye]), np.zeros(2 * k)), (np.hstack([eye, -eye]), np.zeros(k))])


class TestCalculus:
    def test_compose_with_identity(self):
        rng = np.random.default_rng(2)
        f = random_net(Architecture.from_widths((1, 4, 3, 1)), rng)
        X = rng.uniform(-2, 2, size=(100, 1))
        assert np.max(np.abs(forward(compose(identity_net(), f), X) - forward(f, X))) <= 1e-12
        assert np.max(np.abs(forward(compose(f, identity_net()), X) - forward(f, X))) <= 1e-12

    def test_compose_realizes_g_after_f(self):
        rng = np.random.default_rng(3)
        f = random_net(Architecture.from_widths((2, 3, 2)), rng)
        g = random_net(Architecture.from_widths((2, 4, 1)), rng)
        X = rng.uniform(size=(100, 2))
        assert np.allclose(forward(compose(f, g), X), forward(g, forward(f, X)), atol=1e-12)

    def test_compose_shape_error(self):
        with pytest.raises(StructuralError):
            compose(zeros(Architecture.from_widths((1, 2, 2))), zeros(Architecture.from_widths((1, 2, 1))))

    def test_parallelize(self):
        rng = np.random.default_rng(4)
        f = random_net(Architecture.from_widths((2, 3, 1)), rng)
        g = random_net(Architecture.from_widths((2, 5, 1)), rng)
        X = rng.uniform(size=(100, 2))
        both = forward(parallelize(f, g), X)
        assert np.allclose(both, np.column_stack([forward(f, X), forward(g, X)]), atol=1e-14)

    def test_parallelize_needs_equal_depth(self):
        with pytest.raises(StructuralError):
            parallelize(zeros(Architecture.from_widths((1, 2, 1))), zeros(Architecture.from_widths((1, 2, 2, 1))))

    @given(st.integers(0, 4), st.integers(0, 2 ** 32 - 1))
    def test_depth_sync_keeps_negative_values(self, q, seed):
        rng = np.random.default_rng(seed)
        f = random_net(Architecture.from_widths((1, 3, 2)), rng)
        X = rng.uniform(-3, 3, size=(50, 1))
        g = depth_sync(f, q)
        assert g.depth == f.depth + q
        assert np.allclose(forward(g, X), forward(f, X), atol=1e-12)

    def test_enlarge_is_exact(self):
        rng = np.random.default_rng(5)
        f = random_net(Architecture.from_widths((2, 3, 2, 1)), rng)
        big = enlarge(f, Architecture.from_widths((2, 7, 5, 1)))
        X = rng.uniform(size=(100, 2))
        assert np.array_equal(forward(big, X), forward(f, X))
        assert big.nonzero_count() == f.nonzero_count()

    def test_enlarge_rejects_narrower(self):
        with pytest.raises(StructuralError):
            enlarge(zeros(Architecture.from_widths((1, 4, 1))), Architecture.from_widths((1, 3, 1)))

    def test_embed(self):
        rng = np.random.default_rng(6)
        f = random_net(Architecture.from_widths((1, 2, 1)), rng)
        g = embed(f, Architecture.from_widths((1, 6, 6, 6, 1)))
        X = rng.uniform(size=(30, 1))
        assert np.allclose(forward(g, X), forward(f, X), atol=1e-12)


class TestSerialization:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(7)
        f = random_net(Architecture.from_widths((3, 4, 2, 1)), rng, scale=1e5)
        save(f, tmp_path / "net.npz")
        g = load(tmp_path / "net.npz")
        assert g.arch == f.arch and np.array_equal(g.to_vector(), f.to_vector())

    def test_rejects_foreign_payload(self):
        import io
        buf = io.BytesIO()
        np.savez(buf, header=np.frombuffer(b'{"format": "other"}', dtype=np.uint8), theta=np.zeros(1))
        with pytest.raises(StructuralError):
            from_bytes(buf.getvalue())

    def test_bytes_stable(self):
        f = random_net(Architecture.from_widths((1, 2, 1)), np.random.default_rng(8))
        assert to_bytes(f) == to_bytes(Network.from_vector(f.arch, f.to_vector()))
