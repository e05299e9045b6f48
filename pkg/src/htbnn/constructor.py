"""Explicit ReLU approximation networks with tracked coefficient sizes.

The building blocks are the sawtooth multiplication network, products and
polynomials built from it, indicator and "test" networks for half-open cubes,
and the local Taylor approximation on a two-level grid of cubes.  Gluing 2^d
shifted copies with tent weights gives a network approximating a Hölder
function on the whole cube, and composing those gives approximants for
compositional targets.

Every builder checks its coefficient bound when the network is assembled.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .builder import Lin, NetBuilder, total
from .network import Architecture, Network, StructuralError, embed
from .prior import RateSpec


class PreconditionError(ValueError):
    """A construction was asked for outside the range where its guarantee holds."""


class CoefficientBoundError(AssertionError):
    """A built network exceeded its coefficient cap."""


def _check_cap(net: Network, cap: float, what: str) -> Network:
    m = net.max_abs_coefficient()
    if m > cap * (1 + 1e-12):
        raise CoefficientBoundError(f"{what}: max |coefficient| {m:.6g} exceeds cap {cap:.6g}")
    return net


@dataclass(frozen=True)
class ApproxConfig:
    d: int
    beta: float
    F: float = 1.0
    M: int = 4
    C: float = 1.0

    def __post_init__(self):
        if self.M < 2:
            raise PreconditionError("grid size M must be at least 2")
        if self.beta <= 0 or self.d < 1:
            raise PreconditionError("need beta > 0 and d >= 1")

    @property
    def deg(self) -> int:
        """Largest integer strictly below beta (Taylor degree)."""
        return math.ceil(self.beta) - 1

    @property
    def B_M(self) -> int:
        return math.ceil(self.M ** (2 * (self.beta + 1)))

    @property
    def B_true(self) -> float:
        return 2 * max(self.F, 1.0) * math.exp(2 * self.d)

    @property
    def cap(self) -> float:
        return max(self.B_true, float(self.B_M) ** 2)

    @property
    def band(self) -> float:
        return 1.0 / self.M ** (2 * self.beta + 2)

    @property
    def R_mult(self) -> int:
        return math.ceil(math.log(self.B_true * self.M ** (2 * self.beta), 4)) + 1

    @property
    def R_poly(self) -> int:
        b = self.beta
        base = math.ceil(math.log(2 * 4 ** (2 * (b + 1)) * max(2.0, self.F) ** (2 * (b + 1)), 4))
        return max(base, math.ceil(math.log(max(self.F, 1.0) * self.M ** (2 * b), 4)) + 2)

    def check(self) -> None:
        lhs = self.M ** (2 * self.beta)
        rhs = self.C * max(1.0, self.F) ** (4 * (self.beta + 1))
        if lhs < rhs:
            raise PreconditionError(
                f"M^(2 beta) = {lhs:.6g} < C (1 v F)^(4(beta+1)) = {rhs:.6g}; increase M")


@dataclass
class Target:
    """Function on [-1, 1]^d with partial derivatives.

    ``partial(alpha, X)`` returns the mixed partial of multi-index ``alpha``
    at the rows of ``X``; it is only needed when the Taylor degree is positive.
    """

    f: Callable[[np.ndarray], np.ndarray]
    partial: Optional[Callable[[tuple, np.ndarray], np.ndarray]] = None

    def derivative(self, alpha: tuple, X: np.ndarray) -> np.ndarray:
        if sum(alpha) == 0:
            return np.asarray(self.f(X), dtype=np.float64)
        if self.partial is None:
            raise PreconditionError("derivative evaluators are required for beta > 1")
        return np.asarray(self.partial(tuple(alpha), X), dtype=np.float64)


def multi_indices(d: int, N: int) -> list[tuple[int, ...]]:
    """All alpha in N^d with |alpha| <= N, graded then lexicographic."""
    out = []
    for deg in range(N + 1):
        for combo in itertools.combinations_with_replacement(range(d), deg):
            alpha = [0] * d
            for k in combo:
                alpha[k] += 1
            out.append(tuple(alpha))
    seen, uniq = set(), []
    for a in out:
        if a not in seen:
            seen.add(a)
            uniq.append(a)
    return uniq


# -- gadgets on builder forms ------------------------------------------------

def _square_abs(b: NetBuilder, u: Lin, R: int) -> Lin:
    """Approximate u^2 for |u| <= 1 with R sawtooth layers (error <= 4^-(R+1))."""
    if u.is_const:
        return b.const(u.const ** 2)
    n = [b.relu(u - c) + b.relu(-u - c) for c in (0.0, 0.5, 1.0)]
    acc = n[0]
    for k in range(1, R):
        tooth = 2 * n[0] - 4 * n[1] + 2 * n[2]
        acc = b.relu(acc - tooth / 4 ** k)
        n = [b.relu(tooth - c) for c in (0.0, 0.5, 1.0)]
    tooth = 2 * n[0] - 4 * n[1] + 2 * n[2]
    return acc - tooth / 4 ** R


def _mult(b: NetBuilder, x: Lin, y: Lin, R: int) -> Lin:
    """xy = ((x+y)/2)^2 - ((x-y)/2)^2 on [-1, 1]^2, error <= 4^-R."""
    if x.is_const and y.is_const:
        return b.const(x.const * y.const)
    return _square_abs(b, (x + y) * 0.5, R) - _square_abs(b, (x - y) * 0.5, R)


def _product(b: NetBuilder, factors: Sequence[Lin], R: int) -> Lin:
    fs = list(factors)
    if len(fs) == 1:
        return fs[0]
    while len(fs) > 1:
        nxt = [_mult(b, fs[k], fs[k + 1], R) for k in range(0, len(fs) - 1, 2)]
        if len(fs) % 2:
            nxt.append(fs[-1])
        fs = nxt
    return fs[0]


def _indicator(b: NetBuilder, xs: Sequence[Lin], lo, hi, R: float) -> Lin:
    """1 on [lo + 1/R, hi - 1/R], 0 outside [lo, hi), in [0, 1] between."""
    E = total([b.relu(lo[k] + 1.0 / R - xs[k]) + b.relu(xs[k] - hi[k] + 1.0 / R)
               for k in range(len(xs))], b)
    return b.relu(1.0 - R * E)


def _tests(b: NetBuilder, xs: Sequence[Lin], lo, hi, values: Sequence, R: float) -> list[Lin]:
    """s * 1_[lo, hi)(x) for each s in ``values``, sharing the distance layer."""
    E = total([b.relu(lo[k] + 1.0 / R - xs[k]) + b.relu(xs[k] - hi[k] + 1.0 / R)
               for k in range(len(xs))], b)
    out = []
    for s in values:
        s = s if isinstance(s, Lin) else b.const(float(s))
        if s.is_const and s.const >= 0:
            out.append(b.relu(s - R * R * E))
            continue
        if not s.is_const:
            s = b.lift(s, E.layer)
        out.append(b.relu(s - R * R * E) - b.relu(-s - R * R * E))
    return out


def _clamp(b: NetBuilder, y: Lin) -> Lin:
    return b.relu(1.0 - b.relu(1.0 - y))


def _taylor(b: NetBuilder, xs: Sequence[Lin], target: Target, cfg: ApproxConfig,
            shift: Sequence[int]):
    """Local Taylor polynomial around the corner of the fine cube holding x.

    Returns the approximation, the local coordinates z in [0, 1]^d, the form
    of the coarse corner, the coarse corners and the fine offsets.
    """
    d, M, deg = cfg.d, cfg.M, cfg.deg
    R = float(cfg.B_M)
    h1, h2 = 2.0 / M, 2.0 / M ** 2
    origin = [-1.0 - s / M ** 2 for s in shift]
    cubes = list(itertools.product(*[range(M + s) for s in shift]))
    corners = np.array([[origin[k] + h1 * m[k] for k in range(d)] for m in cubes])
    subs = list(itertools.product(range(M), repeat=d))
    alphas = multi_indices(d, deg)
    Fy = max(cfg.F, 1.0)

    # which coarse cube holds x, and the scaled derivatives at every fine corner
    inds = [_indicator(b, xs, c, c + h1, R) for c in corners]
    corner = [total([c[k] * ind for c, ind in zip(corners, inds)], b) for k in range(d)]
    fine = corners[:, None, :] + h2 * np.array(subs, dtype=np.float64)[None, :, :]
    flat = fine.reshape(-1, d)
    scaled = np.empty((len(cubes), len(subs), len(alphas)))
    for a, alpha in enumerate(alphas):
        fac = h2 ** sum(alpha) / math.prod(math.factorial(k) for k in alpha) / Fy
        scaled[:, :, a] = (target.derivative(alpha, flat) * fac).reshape(len(cubes), len(subs))
    if np.max(np.abs(scaled)) > 1.0 + 1e-12:
        raise PreconditionError("derivatives exceed the Hölder radius F")

    # which fine cube inside the coarse one: its corner and Taylor coefficients
    fine_corner = [[] for _ in range(d)]
    taylor = [[] for _ in alphas]
    for j, sub in enumerate(subs):
        vals = [total([scaled[i, j, a] * inds[i] for i in range(len(cubes)) if scaled[i, j, a] != 0.0], b)
                for a in range(len(alphas))]
        lo = [corner[k] + h2 * sub[k] for k in range(d)]
        hi = [lo[k] + h2 for k in range(d)]
        outs = _tests(b, xs, lo, hi, lo + vals, R)
        for k in range(d):
            fine_corner[k].append(outs[k])
        for a in range(len(alphas)):
            taylor[a].append(outs[d + a])
    fine_corner = [total(v, b) for v in fine_corner]
    ycoef = [total(v, b) for v in taylor]

    z = [(M ** 2 / 2.0) * (xs[k] - fine_corner[k]) for k in range(d)]
    if deg == 0:
        fhat = Fy * ycoef[0]
    else:
        terms = []
        for a, alpha in enumerate(alphas):
            factors = [ycoef[a]] + [z[k] for k in range(d) for _ in range(alpha[k])]
            terms.append(_product(b, factors, cfg.R_poly))
        fhat = Fy * total(terms, b)
    return fhat, z, corner, corners, subs


def _localized(b: NetBuilder, xs: Sequence[Lin], target: Target, cfg: ApproxConfig,
               shift: Sequence[int]) -> Lin:
    """Approximation of w_v(x) f(x) for the grid shifted by ``shift`` (0/1 per axis)."""
    d, M = cfg.d, cfg.M
    R = float(cfg.B_M)
    h1, h2, band = 2.0 / M, 2.0 / M ** 2, cfg.band
    fhat, z, corner, corners, subs = _taylor(b, xs, target, cfg, shift)

    # check: 1 within `band` of a fine-cube face, 0 beyond twice that
    near_coarse = 1.0 - total([_indicator(b, xs, c + band, c + h1 - band, R) for c in corners], b)
    inner = []
    for sub in subs:
        lo = [corner[k] + h2 * sub[k] + band for k in range(d)]
        hi = [lo[k] + h2 - 2 * band for k in range(d)]
        inner.extend(_tests(b, xs, lo, hi, [1.0], R))
    near_fine = 1.0 - total(inner, b)
    check = 1.0 - b.relu(1.0 - b.relu(near_fine) - near_coarse)

    Bt = cfg.B_true
    ftrue = b.relu(fhat - Bt * check) - b.relu(-fhat - Bt * check)

    tents = [b.relu(1.0 - b.relu(2 * zk - 1.0) - b.relu(1.0 - 2 * zk)) for zk in z]
    weight = _product(b, tents, cfg.R_mult)
    return Bt * _mult(b, ftrue / Bt, weight, cfg.R_mult)


def _wide(b: NetBuilder, xs: Sequence[Lin], target: Target, cfg: ApproxConfig) -> Lin:
    parts = [_localized(b, xs, target, cfg, v)
             for v in itertools.product((0, 1), repeat=cfg.d)]
    return total(parts, b)


# -- public builders ---------------------------------------------------------

def mult_net(R: int) -> Network:
    """Depth R, width <= 18, coefficients <= 4, |f(x, y) - xy| <= 4^-R on [-1, 1]^2."""
    if R < 1:
        raise PreconditionError("R must be >= 1")
    b = NetBuilder(2)
    x, y = b.inputs()
    return _check_cap(b.build([_mult(b, x, y, R)]), 4.0, "mult_net")


def poly_min_R(N: int) -> int:
    return math.ceil(math.log(2 * 4 ** (2 * (N + 1)), 4))


def poly_net(d: int, N: int, coeffs: Sequence[float], R: int) -> Network:
    """Network of (x, y_1..y_C) approximating sum_k r_k y_k m_k(x).

    ``m_k`` runs over the monomials of degree <= N in graded order (see
    :func:`multi_indices`); inputs are x_1..x_d followed by y_1..y_C.
    """
    alphas = multi_indices(d, N)
    if len(coeffs) != len(alphas):
        raise StructuralError(f"need {len(alphas)} coefficients, got {len(coeffs)}")
    if R < poly_min_R(N):
        raise PreconditionError(f"R = {R} below the required {poly_min_R(N)}")
    b = NetBuilder(d + len(alphas))
    ins = b.inputs()
    xs, ys = ins[:d], ins[d:]
    n_factors = max(2, N + 1)
    terms = []
    for r, y, alpha in zip(coeffs, ys, alphas):
        factors = [y] + [xs[k] for k in range(d) for _ in range(alpha[k])]
        factors += [b.const(1.0)] * (n_factors - len(factors))
        terms.append(r * _product(b, factors, R))
    cap = max(4.0, max(abs(float(r)) for r in coeffs))
    return _check_cap(b.build([total(terms, b)]), cap, "poly_net")


def _cube_args(a, bb, R):
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    bb = np.atleast_1d(np.asarray(bb, dtype=np.float64))
    if a.shape != bb.shape:
        raise StructuralError("cube corners must have equal length")
    if np.any(bb - a < 2.0 / R - 1e-15):
        raise PreconditionError("need b - a >= 2/R in every coordinate")
    return a, bb


def indicator_net(a, b, R: float) -> Network:
    """Depth 2, width 2d: 1_[a, b)(x) exactly on the margin set K_{1/R}."""
    a, bb = _cube_args(a, b, R)
    nb = NetBuilder(a.size)
    out = _indicator(nb, nb.inputs(), a, bb, R)
    cap = max(R, 1.0 / R, np.max(np.abs(a)), np.max(np.abs(bb)))
    return _check_cap(nb.build([out]), cap, "indicator_net")


def test_net(a, b, s: float, R: float) -> Network:
    """Depth 2: s * 1_[a, b)(x) exactly on the margin set K_{1/R}."""
    a, bb = _cube_args(a, b, R)
    if abs(s) > R:
        raise PreconditionError("need |s| <= R")
    nb = NetBuilder(a.size)
    out = _tests(nb, nb.inputs(), a, bb, [s], R)[0]
    cap = max(R * R, 1.0 / R, np.max(np.abs(a)), np.max(np.abs(bb)))
    return _check_cap(nb.build([out], depth=2), cap, "test_net")


test_net.__test__ = False  # not a pytest test


def in_margin_set(x: np.ndarray, a, b, R: float) -> np.ndarray:
    """Rows of ``x`` outside every band [a, a + 1/R) and (b - 1/R, b]."""
    x = np.atleast_2d(x)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    lower = (x >= a) & (x < a + 1.0 / R)
    upper = (x > b - 1.0 / R) & (x <= b)
    return ~np.any(lower | upper, axis=1)


def taylor_grid_net(target: Target, cfg: ApproxConfig) -> Network:
    """Piecewise Taylor polynomial on the fine grid, exact grid lookup on interiors."""
    cfg.check()
    b = NetBuilder(cfg.d)
    fhat = _taylor(b, b.inputs(), target, cfg, (0,) * cfg.d)[0]
    return _check_cap(b.build([fhat]), max(cfg.F, float(cfg.B_M) ** 2), "taylor_grid_net")


def localized_net(target: Target, cfg: ApproxConfig, shift: Optional[Sequence[int]] = None) -> Network:
    """Approximation of w_v(x) * f(x) for one (possibly shifted) grid."""
    cfg.check()
    shift = tuple(shift) if shift is not None else (0,) * cfg.d
    b = NetBuilder(cfg.d)
    out = _localized(b, b.inputs(), target, cfg, shift)
    return _check_cap(b.build([out]), cfg.cap, "localized_net")


def width_threshold(cfg: ApproxConfig) -> int:
    d, N = cfg.d, cfg.deg
    return 64 * math.comb(d + N, d) * 2 ** d * d * d * (N + 1) * cfg.M ** d


def depth_threshold(cfg: ApproxConfig) -> int:
    d, N = cfg.d, cfg.deg
    return 5 + math.ceil(math.log(cfg.M ** (2 * cfg.beta), 4) - 1e-12) * (
        math.ceil(math.log2(max(d, N + 1))) + 1)


def wide_net(target: Target, cfg: ApproxConfig, L: Optional[int] = None,
             width: Optional[int] = None) -> Network:
    """Sum of the 2^d shifted localized networks: approximates f on all of [-1, 1]^d.

    With ``L`` and ``width`` the result is embedded into F(L, (d, width, ..., width, 1)),
    which must meet the depth/width thresholds and hold the construction.
    """
    cfg.check()
    if (L is None) != (width is None):
        raise ValueError("give both L and width, or neither")
    if L is not None:
        if L < depth_threshold(cfg):
            raise PreconditionError(f"L = {L} below depth threshold {depth_threshold(cfg)}")
        if width < width_threshold(cfg):
            raise PreconditionError(f"width = {width} below threshold {width_threshold(cfg)}")
    b = NetBuilder(cfg.d)
    net = _check_cap(b.build([_wide(b, b.inputs(), target, cfg)]), cfg.cap, "wide_net")
    if L is None:
        return net
    if net.depth > L or max(net.arch.widths[1:-1]) > width:
        raise StructuralError(
            f"construction needs depth {net.depth} and width {max(net.arch.widths[1:-1])}, "
            f"target class is F({L}, {width})")
    return embed(net, Architecture(L, (cfg.d,) + (width,) * L + (1,)))


def clamp_net() -> Network:
    """x -> (1 - (1 - x)_+)_+, the projection onto [0, 1]."""
    b = NetBuilder(1)
    return b.build([_clamp(b, b.inputs()[0])])


# -- partition of unity (direct evaluation) ---------------------------------

def tent_weight(x: np.ndarray, M: int, shift: Sequence[int]) -> np.ndarray:
    """w_v(x) = prod_k (1 - M^2 |c_k + 1/M^2 - x_k|)_+ for the fine cube of the shifted grid."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    h2 = 2.0 / M ** 2
    w = np.ones(x.shape[0])
    for k, s in enumerate(shift):
        origin = -1.0 - s / M ** 2
        c = origin + np.floor((x[:, k] - origin) / h2) * h2
        w *= np.maximum(0.0, 1.0 - M ** 2 * np.abs(c + 1.0 / M ** 2 - x[:, k]))
    return w


def tent_partition(x: np.ndarray, M: int) -> np.ndarray:
    d = np.atleast_2d(x).shape[1]
    return sum(tent_weight(x, M, v) for v in itertools.product((0, 1), repeat=d))


# -- compositions ------------------------------------------------------------

@dataclass
class CompositionSpec:
    """Layers of component functions, already rescaled to the unit cube.

    ``components[i][j]`` maps [0, 1]^{t_i} to [0, 1] for i < q and to R for
    the last layer; ``subsets[i][j]`` lists which outputs of layer i - 1 (the
    inputs for i = 0) it reads.  ``K`` bounds the Hölder norm of each rescaled
    component.
    """

    q: int
    dims: tuple
    t: tuple
    beta: tuple
    K: float
    subsets: list
    components: list

    def __post_init__(self):
        q = self.q
        if len(self.dims) != q + 2 or len(self.t) != q + 1 or len(self.beta) != q + 1:
            raise StructuralError("dims needs q+2 entries, t and beta need q+1")
        if self.dims[-1] != 1:
            raise StructuralError("the last layer must be scalar")
        for i in range(q + 1):
            if self.t[i] > self.dims[i]:
                raise StructuralError(f"t_{i} exceeds d_{i}")
            if len(self.subsets[i]) != self.dims[i + 1] or len(self.components[i]) != self.dims[i + 1]:
                raise StructuralError(f"layer {i} needs {self.dims[i + 1]} components")
            for sub in self.subsets[i]:
                if len(sub) != self.t[i] or max(sub) >= self.dims[i]:
                    raise StructuralError(f"bad coordinate subset {sub} in layer {i}")

    def __call__(self, X: np.ndarray) -> np.ndarray:
        vals = np.atleast_2d(np.asarray(X, dtype=np.float64))
        for i in range(self.q + 1):
            vals = np.column_stack([comp.f(vals[:, list(sub)])
                                    for sub, comp in zip(self.subsets[i], self.components[i])])
        return vals[:, 0]


def rescale_components(gs: Sequence[Callable], K: float) -> list[Callable]:
    """Map g_0..g_q, each with values in [-K, K], to maps between unit cubes.

    h_0 = g_0/(2K) + 1/2, h_i = g_i(2K u - K)/(2K) + 1/2 and h_q = g_q(2K u - K),
    so that h_q o ... o h_0 = g_q o ... o g_0.
    """
    q = len(gs) - 1
    out = []
    for i, g in enumerate(gs):
        pre = (lambda u: u) if i == 0 else (lambda u: 2 * K * u - K)
        post = (lambda v: v) if i == q else (lambda v: v / (2 * K) + 0.5)
        out.append(lambda u, g=g, pre=pre, post=post: post(g(pre(u))))
    return out


def _unit_to_sym(comp: Target, t: int) -> Target:
    """Component on [0, 1]^t seen as a function of x' = 2x - 1 in [-1, 1]^t."""
    def f(X):
        return comp.f((np.asarray(X) + 1.0) / 2.0)

    def partial(alpha, X):
        return comp.partial(alpha, (np.asarray(X) + 1.0) / 2.0) * 0.5 ** sum(alpha)

    return Target(f, partial if comp.partial is not None else None)


class NTooSmallError(PreconditionError):
    def __init__(self, msg: str, n_min: int):
        super().__init__(msg)
        self.n_min = n_min


@dataclass
class CompositionResult:
    net: Network
    sparsity: int
    r_star: int
    embedded: bool
    grid_sizes: list = field(default_factory=list)
    max_coefficient: float = 0.0
    c_beta: int = 0
    natural_widths: tuple = ()

    def __iter__(self):
        return iter((self.net, self.sparsity, self.r_star))


def compositional_net(spec: CompositionSpec, n: int, delta: float = 0.05, kappa: float = 0.0,
                      C: float = 1.0, strict: bool = True) -> CompositionResult:
    """Approximant of a compositional target placed in F(ceil(log^{1+delta} n), ceil(sqrt n)).

    Each component is approximated by a wide network with grid size
    M_i = ceil((n / log^gamma n)^{1/(2(2 beta*_i + t_i))}); inner layers are
    clamped to [0, 1].  When the class is too small for the construction a
    :class:`NTooSmallError` carries the smallest n that would fit; with
    ``strict=False`` the natural-size network is returned instead.
    """
    rate = RateSpec(delta, kappa)
    bstar = rate.effective_smoothness(spec.beta)
    b = NetBuilder(spec.dims[0])
    values = b.inputs()
    grid_sizes, caps = [], []
    for i in range(spec.q + 1):
        M = rate.grid_size(n, bstar[i], spec.t[i])
        cfg = ApproxConfig(spec.t[i], spec.beta[i], F=spec.K, M=M, C=C)
        cfg.check()
        grid_sizes.append(M)
        caps.append(cfg.cap)
        new = []
        for sub, comp in zip(spec.subsets[i], spec.components[i]):
            xs = [2.0 * values[s] - 1.0 for s in sub]
            out = _wide(b, xs, _unit_to_sym(comp, spec.t[i]), cfg)
            new.append(_clamp(b, out) if i < spec.q else out)
        values = new
    natural = b.build(values)
    depth = natural.depth
    width = max(natural.arch.widths[1:-1])
    r_star = max(natural.arch.widths)
    L = math.ceil(math.log(n) ** (1 + delta))
    W = math.ceil(math.sqrt(n))
    maxc = natural.max_abs_coefficient()
    c_beta = max(0, math.ceil(math.log(maxc) / math.log(n))) if maxc > 1 else 0
    res = dict(sparsity=natural.nonzero_count(), r_star=r_star, grid_sizes=grid_sizes,
               max_coefficient=maxc, c_beta=c_beta, natural_widths=natural.arch.widths)
    if depth <= L and width <= W:
        net = embed(natural, Architecture(L, (spec.dims[0],) + (W,) * L + (1,)))
        return CompositionResult(net=net, embedded=True, **res)
    n_min = max(math.ceil(math.exp(depth ** (1.0 / (1 + delta)))), width * width)
    if strict:
        raise NTooSmallError(
            f"construction has depth {depth} and width {width}; F({L}, {W}) at n={n} is too "
            f"small (needs n >= {n_min} for this network)", n_min)
    return CompositionResult(net=natural, embedded=False, **res)
