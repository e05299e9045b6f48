"""Mean-field variational approximation with a heavy-tailed location-scale family.

Every coefficient gets an independent law h((x - mu) / s) / s with a common
base density h.  With the prior coordinate h(x / sigma) / sigma, the
coordinate KL only depends on u = mu / sigma and r = s / sigma:

    KL = -H(h) - log r - E_zeta log h(u + r zeta),      zeta ~ h.

The objective (alpha/2) E_Q sum_i (Y_i - f(X_i))^2 + KL(Q, prior) equals the
KL from Q to the tempered posterior up to an additive constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate

from .data import RegressionData
from .divergences import DesignSample, Estimate, evaluate, renyi_from_gap
from .network import Architecture, Network, param_count
from .prior import CUSTOM, GAUSSIAN, STUDENT, HeavyTailDensity, Prior, moment, student


class ConfigurationError(ValueError):
    """A variational family that the method does not support."""


def _required_moment(kappa: float) -> float:
    return max(2.0, 1.0 + kappa)


def check_family(h: HeavyTailDensity, kappa: float = 0.0) -> None:
    lam = _required_moment(kappa)
    if h.kind == CUSTOM:
        raise ConfigurationError("variational fitting needs a Student or Gaussian base density")
    if not math.isfinite(moment(h, lam)):
        raise ConfigurationError(
            f"{h.name} has an infinite moment of order {lam:g}; the variational family needs it "
            "finite (use student(nu) with nu > 2)")


@dataclass
class VariationalState:
    arch: Architecture
    mu: np.ndarray
    log_s: np.ndarray
    h: HeavyTailDensity = field(default_factory=student)
    kappa: float = 0.0

    def __post_init__(self):
        T = param_count(self.arch).T
        self.mu = np.array(self.mu, dtype=np.float64).reshape(-1)
        self.log_s = np.array(self.log_s, dtype=np.float64).reshape(-1)
        if self.mu.size != T or self.log_s.size != T:
            raise ValueError(f"state needs {T} locations and scales")
        if not (np.all(np.isfinite(self.mu)) and np.all(np.isfinite(self.log_s))):
            raise ValueError("state parameters must be finite")
        check_family(self.h, self.kappa)

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_s)

    def copy(self) -> "VariationalState":
        return VariationalState(self.arch, self.mu.copy(), self.log_s.copy(), self.h, self.kappa)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        zeta = self.h.sample(rng, (size, self.mu.size))
        return self.mu + self.scale * zeta

    @classmethod
    def from_prior(cls, arch: Architecture, prior: Prior, h: Optional[HeavyTailDensity] = None):
        h = h or prior.density
        return cls(arch, np.zeros(param_count(arch).T), -prior.log_inv_sigma(arch), h)


def oracle_q_star(approximant: Network, prior: Prior,
                  h: Optional[HeavyTailDensity] = None) -> VariationalState:
    """Product law centered at the coefficients of ``approximant`` with prior scales."""
    h = h or prior.density
    return VariationalState(approximant.arch, approximant.to_vector(),
                            -prior.log_inv_sigma(approximant.arch), h)


# -- log h derivatives -------------------------------------------------------

def _dlog_h(h: HeavyTailDensity, x):
    if h.kind == STUDENT:
        return -(h.nu + 1.0) * x / (h.nu + x * x)
    if h.kind == GAUSSIAN:
        return -x
    raise ConfigurationError("no derivative for custom densities")


# -- per-coordinate KL -------------------------------------------------------

def coordinate_kl(q: HeavyTailDensity, u: float, r: float,
                  p: Optional[HeavyTailDensity] = None) -> float:
    """KL(q_{u, r} || p_{0, 1}) by adaptive quadrature, with p = q by default.

    The integrand peaks near zeta = 0 (mass of q) and zeta = -u / r (peak of
    log p); both are passed as break points when they are in range.
    """
    p = p or q
    if u == 0.0 and r == 1.0 and p.name == q.name:
        return 0.0

    def integrand(z):
        return float(q.pdf(z) * p.logpdf(u + r * z))

    pts = [0.0]
    star = -u / r
    if abs(star) < 1e4 and star != 0.0:
        pts.append(star)
    edges = [-np.inf] + sorted(pts) + [np.inf]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        total += integrate.quad(integrand, a, b, limit=400, epsabs=1e-12, epsrel=1e-10)[0]
    return float(-q.entropy() - math.log(r) - total)


def _scaled(state: VariationalState, prior: Prior):
    L = prior.log_inv_sigma(state.arch)
    return state.mu * np.exp(L), np.exp(state.log_s + L)


def kl_quadrature(state: VariationalState, prior: Prior) -> np.ndarray:
    """Per-coordinate KL(Q_k, prior_k), computed once per distinct (u, r) pair."""
    u, r = _scaled(state, prior)
    out = np.empty(u.size)
    cache: dict = {}
    for k in range(u.size):
        key = (float(u[k]), float(r[k]))
        if key not in cache:
            cache[key] = coordinate_kl(state.h, key[0], key[1], prior.density)
        out[k] = cache[key]
    return out


# -- network loss and gradient -----------------------------------------------

def sse_and_grad(arch: Architecture, theta: np.ndarray, X: np.ndarray, Y: np.ndarray):
    """Sum of squared residuals and its gradient with respect to the coefficients."""
    net = Network.from_vector(arch, theta)
    acts = [X]
    pre = []
    a = X
    for l, (W, v) in enumerate(net.layers):
        z = a @ W.T + v
        pre.append(z)
        a = np.maximum(z, 0.0) if l < net.depth else z
        acts.append(a)
    resid = a[:, 0] - Y
    sse = float(np.dot(resid, resid))
    grads = []
    delta = 2.0 * resid[:, None]
    for l in range(net.depth, -1, -1):
        W, _ = net.layers[l]
        gW = delta.T @ acts[l]
        gv = delta.sum(axis=0)
        grads.append(np.column_stack([gv, gW]).ravel())
        if l > 0:
            delta = (delta @ W) * (pre[l - 1] > 0)
    return sse, np.concatenate(grads[::-1])


@dataclass(frozen=True)
class VBObjectiveEstimate:
    value: float
    grad_mu: np.ndarray
    grad_log_s: np.ndarray
    mc_samples: int
    stderr: float
    likelihood: float
    kl: float


def vb_objective(state: VariationalState, data: RegressionData, alpha: float, prior: Prior,
                 mc_samples: int = 8, rng: Optional[np.random.Generator] = None,
                 zeta: Optional[np.ndarray] = None, kl: str = "mc",
                 free: Optional[np.ndarray] = None) -> VBObjectiveEstimate:
    """Reparameterized estimate of (alpha/2) E_Q SSE + KL(Q, prior) and its gradient.

    ``zeta`` fixes the base draws (common random numbers).  ``kl="mc"`` uses
    the same draws for the KL term with the exact entropy of h;
    ``kl="quad"`` integrates each coordinate KL numerically and differentiates
    it by centered differences on (mu, log s) with step 1e-5.
    """
    if mc_samples < 1:
        raise ValueError("mc_samples must be at least 1")
    T = state.mu.size
    if zeta is None:
        if rng is None:
            raise ValueError("pass rng or zeta")
        zeta = state.h.sample(rng, (mc_samples, T))
    zeta = np.atleast_2d(zeta)
    S = zeta.shape[0]
    s = state.scale
    thetas = state.mu + s * zeta
    per_sample = np.empty(S)
    g_mu = np.zeros(T)
    g_ls = np.zeros(T)
    for k in range(S):
        if data.n:
            sse, g = sse_and_grad(state.arch, thetas[k], data.X, data.Y)
        else:
            sse, g = 0.0, np.zeros(T)
        per_sample[k] = 0.5 * alpha * sse
        g = 0.5 * alpha * g
        g_mu += g / S
        g_ls += g * s * zeta[k] / S
    sig_inv = np.exp(prior.log_inv_sigma(state.arch))
    if kl == "mc":
        u, r = _scaled(state, prior)
        x = u + r * zeta
        logh = prior.density.logpdf(x)
        kl_terms = -state.h.entropy() - np.log(r) - logh
        kl_per_sample = kl_terms.sum(axis=1)
        dl = _dlog_h(prior.density, x)
        g_mu += -(dl * sig_inv).mean(axis=0)
        g_ls += -1.0 - (dl * r * zeta).mean(axis=0)
        kl_val = float(kl_per_sample.mean())
        total = per_sample + kl_per_sample
    else:
        kl_vec = kl_quadrature(state, prior)
        kl_val = float(kl_vec.sum())
        step = 1e-5
        idx = np.arange(T) if free is None else np.asarray(free)
        for k in idx:
            g_mu[k] += _kl_fd(state, prior, k, "mu", step)
            g_ls[k] += _kl_fd(state, prior, k, "log_s", step)
        total = per_sample + kl_val
    se = float(np.std(total, ddof=1) / math.sqrt(S)) if S > 1 else float("nan")
    return VBObjectiveEstimate(float(total.mean()), g_mu, g_ls, S, se,
                               float(per_sample.mean()), kl_val)


def _kl_fd(state, prior, k, which, step):
    L = float(prior.log_inv_sigma(state.arch)[k])
    sig_inv = math.exp(L)

    def kl_at(mu, ls):
        return coordinate_kl(state.h, mu * sig_inv, math.exp(ls + L), prior.density)

    mu, ls = float(state.mu[k]), float(state.log_s[k])
    if which == "mu":
        h = step * max(1.0, abs(mu))
        return (kl_at(mu + h, ls) - kl_at(mu - h, ls)) / (2 * h)
    return (kl_at(mu, ls + step) - kl_at(mu, ls - step)) / (2 * step)


# -- optimizer ---------------------------------------------------------------

@dataclass(frozen=True)
class VBConfig:
    steps: int = 2000
    lr: float = 0.01
    mc_samples: int = 4
    eval_every: int = 50
    eval_samples: int = 256
    decay: float = 1000.0
    seed: int = 0
    max_restarts: int = 10
    init_log_s_shift: float = 0.0

    def __post_init__(self):
        if self.steps < 1 or self.mc_samples < 1 or self.eval_samples < 2 or self.eval_every < 1:
            raise ValueError("steps, mc_samples, eval_every must be positive; eval_samples >= 2")
        if not self.lr > 0:
            raise ValueError("lr must be positive")


@dataclass
class VBTrace:
    steps: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    best: list = field(default_factory=list)
    restarts: int = 0
    lr_final: float = 0.0


def fit_vb(data: RegressionData, arch: Architecture, prior: Prior, alpha: float,
           cfg: VBConfig = VBConfig(), h: Optional[HeavyTailDensity] = None,
           init: Optional[VariationalState] = None,
           free: Optional[Sequence[int]] = None) -> tuple[VariationalState, VBTrace]:
    """Adam steps on (mu, log s) from the prior, keeping the best state seen.

    Candidates are the iterates and the running average over the second half
    of the run.  They are compared on a fixed bank of base draws, so the
    comparison is a deterministic function of the state.  A non-finite
    objective halves the step size and restarts from the best state, at most
    ``max_restarts`` times.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    h = h or prior.density
    check_family(h)
    rng = np.random.default_rng(cfg.seed)
    state = init.copy() if init is not None else VariationalState.from_prior(arch, prior, h)
    state.log_s = state.log_s + cfg.init_log_s_shift
    T = state.mu.size
    mask = np.zeros(T, dtype=bool)
    mask[np.arange(T) if free is None else np.asarray(free)] = True
    bank = h.sample(np.random.default_rng([cfg.seed, 1]), (cfg.eval_samples, T))

    def score(st):
        return vb_objective(st, data, alpha, prior, zeta=bank).value

    best_state, best_val = state.copy(), score(state)
    trace = VBTrace()
    trace.steps.append(0)
    trace.objective.append(best_val)
    trace.best.append(best_val)
    lr = cfg.lr
    m1 = np.zeros(2 * T)
    m2 = np.zeros(2 * T)
    b1, b2, eps = 0.9, 0.999, 1e-8
    avg_mu = np.zeros(T)
    avg_ls = np.zeros(T)
    n_avg = 0
    t = 0
    while t < cfg.steps:
        t += 1
        est = vb_objective(state, data, alpha, prior, mc_samples=cfg.mc_samples, rng=rng)
        g = np.concatenate([est.grad_mu * mask, est.grad_log_s * mask])
        if not (math.isfinite(est.value) and np.all(np.isfinite(g))):
            if trace.restarts >= cfg.max_restarts:
                break
            trace.restarts += 1
            lr *= 0.5
            state = best_state.copy()
            m1[:] = 0.0
            m2[:] = 0.0
            continue
        m1 = b1 * m1 + (1 - b1) * g
        m2 = b2 * m2 + (1 - b2) * g * g
        step = lr / math.sqrt(1.0 + t / cfg.decay) * (m1 / (1 - b1 ** t)) / (np.sqrt(m2 / (1 - b2 ** t)) + eps)
        # Adam steps are scale free; measure location steps in units of the current scale
        state.mu = state.mu - step[:T] * state.scale
        state.log_s = state.log_s - step[T:]
        if 2 * t > cfg.steps:
            n_avg += 1
            avg_mu += (state.mu - avg_mu) / n_avg
            avg_ls += (state.log_s - avg_ls) / n_avg
        if t % cfg.eval_every == 0 or t == cfg.steps:
            val = score(state)
            if not math.isfinite(val):
                if trace.restarts >= cfg.max_restarts:
                    break
                trace.restarts += 1
                lr *= 0.5
                state = best_state.copy()
                n_avg = 0
                avg_mu[:] = 0.0
                avg_ls[:] = 0.0
                continue
            if val < best_val:
                best_val, best_state = val, state.copy()
            if n_avg:
                averaged = VariationalState(arch, avg_mu, avg_ls, h, state.kappa)
                a_val = score(averaged)
                if a_val < best_val:
                    best_val, best_state = a_val, averaged
            trace.steps.append(t)
            trace.objective.append(val)
            trace.best.append(best_val)
    trace.lr_final = lr
    return best_state, trace


def objective_on_bank(state: VariationalState, data: RegressionData, alpha: float, prior: Prior,
                      samples: int = 256, seed: int = 0, kl: str = "quad") -> Estimate:
    """Objective with fixed draws, for comparing states; quadrature KL by default."""
    bank = state.h.sample(np.random.default_rng([seed, 2]), (samples, state.mu.size))
    est = vb_objective(state, data, alpha, prior, zeta=bank, kl=kl, free=np.array([], dtype=int))
    return Estimate(est.value, est.stderr)


# -- PAC-Bayes monitor -------------------------------------------------------

def _function_values(state: VariationalState, X: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    from .mcmc import sample_values
    return sample_values(state.arch, thetas, X)


@dataclass(frozen=True)
class PacCheck:
    bound: float
    bound_stderr: float
    expected_renyi: float
    renyi_stderr: float
    kl: float

    @property
    def holds(self) -> bool:
        return self.expected_renyi <= self.bound + 3.0 * math.hypot(self.bound_stderr, self.renyi_stderr)


def pac_bound(state: VariationalState, f0, design: DesignSample, alpha: float, n: int,
              prior: Prior, mc_samples: int = 200, rng: Optional[np.random.Generator] = None,
              kl: Optional[float] = None) -> PacCheck:
    """(alpha / (2(1 - alpha))) E_Q ||f - f0||^2 + KL(Q, prior) / (n (1 - alpha)),
    alongside the Monte Carlo value of E_Q D_alpha(f, f0) on the same draws."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if n < 1:
        raise ValueError("n must be positive")
    rng = rng or np.random.default_rng(0)
    X = design.points
    g0 = evaluate(f0, X)
    thetas = state.sample(rng, mc_samples)
    vals = _function_values(state, X, thetas)
    vals = np.where(np.isfinite(vals), vals, np.sign(vals) * 1e150)
    gaps = vals - g0
    l2 = np.mean(gaps ** 2, axis=1)
    ren = np.array([renyi_from_gap(gap, alpha).value for gap in gaps])
    kl_total = float(kl_quadrature(state, prior).sum()) if kl is None else float(kl)
    coef = alpha / (2.0 * (1.0 - alpha))
    bound = coef * l2.mean() + kl_total / (n * (1.0 - alpha))
    m = mc_samples
    return PacCheck(float(bound), float(coef * l2.std(ddof=1) / math.sqrt(m)),
                    float(ren.mean()), float(ren.std(ddof=1) / math.sqrt(m)), kl_total)
