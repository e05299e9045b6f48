"""Heavy-tailed weight priors: base densities, tail certification, scaling
schedules and rate exponents.

A prior draw sets every coefficient to ``theta_k = sigma_k * zeta_k`` with
``zeta_k`` i.i.d. from a symmetric heavy-tailed density ``h``.  The scales
are tiny (``sigma`` near ``exp(-86)`` for n=4096 under the constant schedule),
so they are only ever handled as ``log(1/sigma_k)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, special

from .network import Architecture, Network, coefficient_index, param_count

__all__ = [
    "HeavyTailDensity", "cauchy", "student", "gaussian", "custom",
    "CertificationReport", "certify", "default_grid", "moment",
    "ScalingSchedule", "RateSpec", "Prior",
    "sample_prior", "log_prior_density", "log_scaled_density", "draw_scaled", "family",
]

STUDENT, GAUSSIAN, CUSTOM = 0, 1, 2


def _softplus(s):
    return np.logaddexp(0.0, s)


class HeavyTailDensity:
    """Symmetric base density ``h`` for the weight prior.

    Built through :func:`cauchy`, :func:`student`, :func:`gaussian` or
    :func:`custom`.  The Gaussian is only there as a light-tailed reference
    that must fail certification.
    """

    def __init__(self, name: str, kind: int, nu: float = math.inf,
                 pdf: Optional[Callable] = None, logpdf: Optional[Callable] = None,
                 sf: Optional[Callable] = None, sampler: Optional[Callable] = None):
        self.name = name
        self.kind = kind
        self.nu = float(nu)
        self._pdf = pdf
        self._logpdf = logpdf
        self._sf = sf
        self._sampler = sampler
        if kind == STUDENT:
            self._log_norm = (special.gammaln((nu + 1) / 2) - special.gammaln(nu / 2)
                              - 0.5 * math.log(nu * math.pi))

    def __repr__(self):
        return f"HeavyTailDensity({self.name})"

    @property
    def log_norm(self) -> float:
        """log of the Student normalizing constant; 0 for other families."""
        return getattr(self, "_log_norm", 0.0)

    # density in terms of log|x|; this is what keeps tiny scales tractable
    def log_h_from_log_abs(self, la):
        la = np.asarray(la, dtype=np.float64)
        if self.kind == STUDENT:
            return self._log_norm - 0.5 * (self.nu + 1) * _softplus(2 * la - math.log(self.nu))
        if self.kind == GAUSSIAN:
            return -0.5 * math.log(2 * math.pi) - 0.5 * np.exp(2 * la)
        with np.errstate(over="ignore"):
            return self.logpdf(np.exp(la))

    def logpdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.kind == CUSTOM:
            if self._logpdf is not None:
                return np.asarray(self._logpdf(x), dtype=np.float64)
            with np.errstate(divide="ignore"):
                return np.log(np.asarray(self._pdf(x), dtype=np.float64))
        with np.errstate(divide="ignore"):
            return self.log_h_from_log_abs(np.log(np.abs(x)))

    def pdf(self, x):
        if self.kind == CUSTOM:
            return np.asarray(self._pdf(np.asarray(x, dtype=np.float64)), dtype=np.float64)
        return np.exp(self.logpdf(x))

    def sf(self, x):
        """Survival function P(zeta > x)."""
        x = np.asarray(x, dtype=np.float64)
        if self.kind == STUDENT:
            return special.stdtr(self.nu, -x)
        if self.kind == GAUSSIAN:
            return special.ndtr(-x)
        if self._sf is not None:
            return np.asarray(self._sf(x), dtype=np.float64)
        out = np.empty(x.shape)
        flat = out.reshape(-1)
        for k, xv in enumerate(x.reshape(-1)):
            flat[k] = integrate.quad(lambda u: float(self.pdf(u)), xv, np.inf, limit=200)[0]
        return out

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == STUDENT:
            if self.nu == 1.0:
                return rng.standard_cauchy(size)
            # ratio construction: normal over sqrt(chi2 / nu)
            z = rng.standard_normal(size)
            v = rng.chisquare(self.nu, size)
            return z / np.sqrt(v / self.nu)
        if self.kind == GAUSSIAN:
            return rng.standard_normal(size)
        if self._sampler is None:
            raise NotImplementedError(f"{self.name} has no sampler")
        return np.asarray(self._sampler(rng, size), dtype=np.float64)

    def entropy(self) -> float:
        """Differential entropy, -E log h(zeta)."""
        if self.kind == STUDENT:
            nu = self.nu
            return float((nu + 1) / 2 * (special.digamma((nu + 1) / 2) - special.digamma(nu / 2))
                         + 0.5 * math.log(nu) + special.betaln(nu / 2, 0.5))
        if self.kind == GAUSSIAN:
            return 0.5 * math.log(2 * math.pi * math.e)
        val = integrate.quad(lambda u: float(special.entr(self.pdf(u))), 0, np.inf, limit=200)[0]
        return 2.0 * val

    @property
    def sup(self) -> float:
        """||h||_inf, attained at 0 for densities decreasing on [0, inf)."""
        return float(self.pdf(0.0))


def cauchy() -> HeavyTailDensity:
    return HeavyTailDensity("cauchy", STUDENT, nu=1.0)


def student(nu: float = 3.0) -> HeavyTailDensity:
    if nu <= 0:
        raise ValueError("degrees of freedom must be positive")
    return HeavyTailDensity(f"student({nu:g})", STUDENT, nu=nu)


def gaussian() -> HeavyTailDensity:
    return HeavyTailDensity("gaussian", GAUSSIAN)


def custom(pdf: Callable, name: str = "custom", logpdf=None, sf=None, sampler=None) -> HeavyTailDensity:
    return HeavyTailDensity(name, CUSTOM, pdf=pdf, logpdf=logpdf, sf=sf, sampler=sampler)


def family(name: str, nu: float = 3.0) -> HeavyTailDensity:
    name = name.lower()
    if name == "cauchy":
        return cauchy()
    if name in ("student", "t"):
        return student(nu)
    if name in ("gaussian", "normal"):
        return gaussian()
    raise ValueError(f"unknown density family {name!r}")


# -- certification -----------------------------------------------------------

@dataclass
class CertificationReport:
    family: str
    kappa: float
    c1: float
    c2: float
    h1: bool
    h2: bool
    h3: bool
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.h1 and self.h2 and self.h3

    def as_dict(self) -> dict:
        return {"family": self.family, "kappa": self.kappa, "c1": self.c1, "c2": self.c2,
                "H1": self.h1, "H2": self.h2, "H3": self.h3, "passed": self.passed,
                "failures": [dict(f) for f in self.failures]}


def default_grid() -> np.ndarray:
    """0, 100 log-spaced points in [1e-3, 1) and 1000 log-spaced points in [1, 1e6]."""
    return np.concatenate([[0.0], np.logspace(-3, 0, 100, endpoint=False), np.logspace(0, 6, 1000)])


def certify(h: HeavyTailDensity, grid: Optional[np.ndarray] = None, kappa: float = 0.0,
            calibrate_upto: float = 1e3, slack: float = 1.25) -> CertificationReport:
    """Grid certification of the three tail conditions.

    A finite grid cannot show that a ratio stays bounded, so the growth
    conditions are checked by extrapolation: constants are fitted on
    ``x <= calibrate_upto``, inflated by ``slack`` and must then hold on the
    rest of the grid.  A density whose ratio keeps growing (the Gaussian in
    the log condition) fails with the first violating grid point as witness.
    On success the reported constants are the smallest ones valid on the
    whole grid.
    """
    x = np.sort(np.asarray(default_grid() if grid is None else grid, dtype=np.float64))
    if x[0] < 0:
        raise ValueError("grid must be nonnegative")
    failures = []

    # H1: symmetric, positive, bounded, nonincreasing on [0, inf)
    with np.errstate(divide="ignore"):
        lp, lm = h.logpdf(x), h.logpdf(-x)
    hp, hm = np.exp(lp), np.exp(lm)
    h1 = True
    asym = np.abs(hp - hm) > 1e-12 * np.maximum(hp, 1e-300)
    if asym.any():
        h1 = False
        failures.append({"condition": "H1", "witness": float(x[asym][0]), "detail": "not symmetric"})
    if not np.all(lp > -np.inf):
        h1 = False
        failures.append({"condition": "H1", "witness": float(x[~(lp > -np.inf)][0]), "detail": "not positive"})
    if not np.all(np.isfinite(lp)):
        h1 = False
        failures.append({"condition": "H1", "witness": float(x[~np.isfinite(lp)][0]), "detail": "unbounded"})
    rises = np.diff(lp) > 1e-12 * np.maximum(np.abs(lp[:-1]), 1.0)
    if rises.any():
        h1 = False
        failures.append({"condition": "H1", "witness": float(x[1:][rises][0]), "detail": "increasing"})

    # H2: log(1/h(x)) <= c1 (1 + log^{1+kappa}(1+x))
    neglog = -lp
    ratio2 = neglog / (1.0 + np.log1p(x) ** (1.0 + kappa))
    c1, h2 = _extrapolated_constant(x, ratio2, calibrate_upto, slack, "H2", failures)
    c1 = max(c1, 0.0)

    # H3: x * Hbar(x) <= c2 for x >= 1
    big = x >= 1.0
    ratio3 = x[big] * h.sf(x[big])
    c2, h3 = _extrapolated_constant(x[big], ratio3, calibrate_upto, slack, "H3", failures)
    return CertificationReport(h.name, kappa, float(c1), float(c2), h1, h2, h3, failures)


def _extrapolated_constant(x, ratio, calibrate_upto, slack, name, failures):
    if not np.all(np.isfinite(ratio)):
        bad = x[~np.isfinite(ratio)][0]
        failures.append({"condition": name, "witness": float(bad), "detail": "non-finite ratio"})
        return float("inf"), False
    cal = x <= calibrate_upto
    c_cal = float(np.max(ratio[cal])) if cal.any() else float(ratio[0])
    limit = slack * max(c_cal, 0.0)
    over = ratio > limit
    if over.any():
        w = float(x[over][0])
        failures.append({"condition": name, "witness": w, "constant": c_cal,
                         "detail": f"ratio {float(ratio[over][0]):.6g} exceeds {limit:.6g}"})
        return c_cal, False
    return float(np.max(ratio)), True


def moment(h: HeavyTailDensity, lam: float) -> float:
    """m_lam(h) = integral of |x|^lam h(x); ``inf`` when the tail integral diverges.

    Divergence is decided from the tail exponent ``p`` in ``h(x) ~ x^-p``,
    read off log h between 1e8 and 1e9: the integral diverges iff lam - p >= -1.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    lo, hi = 1e8, 1e9
    p = -float(h.logpdf(hi) - h.logpdf(lo)) / math.log(hi / lo)
    if lam - p >= -1.0 - 1e-6:
        return math.inf
    f = lambda u: u ** lam * float(h.pdf(u))
    head = integrate.quad(f, 0.0, 1.0, limit=200, epsabs=0, epsrel=1e-11)[0]
    tail = integrate.quad(f, 1.0, np.inf, limit=400, epsabs=0, epsrel=1e-11)[0]
    return 2.0 * (head + tail)


# -- schedules and rates -----------------------------------------------------

@dataclass(frozen=True)
class ScalingSchedule:
    """Per-coefficient log(1/sigma).

    ``constant``: (log n)^{2(1+delta)} everywhere.
    ``directed``: log^{2(1+delta)}(max(i, j, 2)), capped at the constant value.
    ``custom``: a user array in coefficient order, or a single value.
    """

    mode: str = "constant"
    n: int = 100
    delta: float = 0.05
    values: Optional[tuple] = None

    def __post_init__(self):
        if self.mode not in ("constant", "directed", "custom"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.mode == "custom" and self.values is None:
            raise ValueError("custom schedule needs values")

    @classmethod
    def fixed(cls, log_inv_sigma) -> "ScalingSchedule":
        vals = np.atleast_1d(np.asarray(log_inv_sigma, dtype=np.float64))
        return cls(mode="custom", values=tuple(vals.tolist()))

    @property
    def upper(self) -> float:
        return math.log(self.n) ** (2 * (1 + self.delta))

    def log_inv_sigma(self, arch: Architecture) -> np.ndarray:
        T = param_count(arch).T
        if self.mode == "constant":
            return np.full(T, self.upper)
        if self.mode == "directed":
            idx = coefficient_index(arch)
            m = np.maximum(np.maximum(idx[:, 1], idx[:, 2]), 2)
            return np.minimum(np.log(m) ** (2 * (1 + self.delta)), self.upper)
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.size == 1:
            vals = np.full(T, vals[0])
        if vals.size != T:
            raise ValueError(f"custom schedule has {vals.size} values, architecture needs {T}")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ValueError("log(1/sigma) must be finite and nonnegative")
        return vals


@dataclass(frozen=True)
class RateSpec:
    delta: float = 0.05
    kappa: float = 0.0

    @property
    def gamma(self) -> float:
        return 2 * (1 + self.delta) * (1 + self.kappa) + 1

    @staticmethod
    def effective_smoothness(betas: Sequence[float]) -> np.ndarray:
        """beta*_i = beta_i * prod_{k > i} min(beta_k, 1)."""
        b = np.asarray(betas, dtype=np.float64)
        out = b.copy()
        for i in range(b.size):
            out[i] = b[i] * np.prod(np.minimum(b[i + 1:], 1.0))
        return out

    @staticmethod
    def harmonic_mean(betas: Sequence[float]) -> float:
        """(sum 1/beta_k)^{-1}."""
        return 1.0 / float(np.sum(1.0 / np.asarray(betas, dtype=np.float64)))

    def phi(self, n: float, betas: Sequence[float], ts: Sequence[float]) -> float:
        bs = self.effective_smoothness(betas)
        base = math.log(n) ** self.gamma / n
        return max(base ** (b / (2 * b + t)) for b, t in zip(bs, ts))

    def exponent(self, betas: Sequence[float], ts: Sequence[float]) -> float:
        """Polynomial part of the rate: min_i beta*_i / (2 beta*_i + t_i)."""
        bs = self.effective_smoothness(betas)
        return min(b / (2 * b + t) for b, t in zip(bs, ts))

    def eps(self, n: float, beta: float, t: float) -> float:
        """(n / log^{2(1+kappa)+1} n)^{-beta/(2 beta + t)}."""
        return (n / math.log(n) ** (2 * (1 + self.kappa) + 1)) ** (-beta / (2 * beta + t))

    def eps_anisotropic(self, n: float, betas: Sequence[float]) -> float:
        bt = self.harmonic_mean(betas)
        return (n / math.log(n) ** self.gamma) ** (-bt / (2 * bt + 1))

    def active_width(self, n: float, betas: Sequence[float], ts: Sequence[float]) -> float:
        """Order of the active block size r*: max_i (n/log^gamma n)^{t_i / (2(2 beta*_i + t_i))}."""
        bs = self.effective_smoothness(betas)
        base = n / math.log(n) ** self.gamma
        return max(base ** (0.5 * t / (2 * b + t)) for b, t in zip(bs, ts))

    def grid_size(self, n: float, beta_star: float, t: float) -> int:
        """M_i = ceil((n/log^gamma n)^{1/(2(2 beta*_i + t_i))}), at least 2."""
        base = n / math.log(n) ** self.gamma
        return max(2, math.ceil(base ** (1.0 / (2 * (2 * beta_star + t)))))


# -- prior over network coefficients ----------------------------------------

def log_scaled_density(h: HeavyTailDensity, theta, log_inv_sigma):
    """log of h(theta / sigma) / sigma, evaluated through log|theta| + log(1/sigma)."""
    theta = np.asarray(theta, dtype=np.float64)
    with np.errstate(divide="ignore"):
        la = np.log(np.abs(theta)) + log_inv_sigma
    return h.log_h_from_log_abs(la) + log_inv_sigma


def draw_scaled(h: HeavyTailDensity, log_inv_sigma, rng: np.random.Generator) -> np.ndarray:
    """sign(zeta) exp(log|zeta| - log(1/sigma)) for zeta ~ h."""
    L = np.asarray(log_inv_sigma, dtype=np.float64)
    z = h.sample(rng, L.shape)
    with np.errstate(divide="ignore"):
        return np.sign(z) * np.exp(np.log(np.abs(z)) - L)


@dataclass(frozen=True)
class Prior:
    density: HeavyTailDensity
    schedule: ScalingSchedule

    def log_inv_sigma(self, arch: Architecture) -> np.ndarray:
        return self.schedule.log_inv_sigma(arch)

    def logpdf(self, theta, arch: Architecture) -> float:
        return float(np.sum(log_scaled_density(self.density, theta, self.log_inv_sigma(arch))))

    def sample_vector(self, arch: Architecture, rng: np.random.Generator) -> np.ndarray:
        return draw_scaled(self.density, self.log_inv_sigma(arch), rng)


def sample_prior(arch: Architecture, h: HeavyTailDensity, sched: ScalingSchedule,
                 rng: np.random.Generator) -> Network:
    return Network.from_vector(arch, draw_scaled(h, sched.log_inv_sigma(arch), rng))


def log_prior_density(net: Network, h: HeavyTailDensity, sched: ScalingSchedule) -> float:
    return float(np.sum(log_scaled_density(h, net.to_vector(), sched.log_inv_sigma(net.arch))))
