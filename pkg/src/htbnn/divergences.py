"""Divergences between Gaussian regression models with unit noise.

For models Y = f(X) + N(0, 1) with a common design law P_X every quantity
reduces to an integral over P_X, estimated here by an average over a design
sample together with its standard error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy import special

from .network import Network, forward

Func = Union[Network, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class DesignSample:
    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if pts.shape[0] < 1:
            raise ValueError("design sample is empty")
        if np.any(pts < 0.0) or np.any(pts > 1.0):
            raise ValueError("design points must lie in the unit cube")
        object.__setattr__(self, "points", pts)

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @classmethod
    def uniform(cls, d: int, m: int, rng: np.random.Generator) -> "DesignSample":
        return cls(rng.uniform(size=(m, d)))


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float

    def __float__(self):
        return self.value


def evaluate(f: Func, X: np.ndarray) -> np.ndarray:
    if isinstance(f, Network):
        return forward(f, X)[:, 0]
    return np.asarray(f(X), dtype=np.float64).reshape(-1)


def _mean(values: np.ndarray) -> Estimate:
    m = values.size
    se = float(np.std(values, ddof=1) / math.sqrt(m)) if m > 1 else 0.0
    return Estimate(float(np.mean(values)), se)


def l2_px(f: Func, g: Func, design: DesignSample) -> Estimate:
    """Squared L2(P_X) distance (1/m) sum (f - g)^2."""
    X = design.points
    return _mean((evaluate(f, X) - evaluate(g, X)) ** 2)


def kl_regression(f0: Func, f: Func, design: DesignSample) -> Estimate:
    """KL(P_f0, P_f) = ||f - f0||^2 / 2."""
    e = l2_px(f, f0, design)
    return Estimate(0.5 * e.value, 0.5 * e.stderr)


def kl_variance(f0: Func, f: Func, design: DesignSample) -> Estimate:
    """Variance of the log likelihood ratio under P_f0, equal to ||f - f0||^2."""
    return l2_px(f0, f, design)


def renyi_from_gap(gap: np.ndarray, alpha: float) -> Estimate:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    expo = alpha * (alpha - 1.0) * np.asarray(gap, dtype=np.float64) ** 2 / 2.0
    assert np.all(expo <= 0.0)
    m = expo.size
    # near-equal functions round every exp to 1, far-off ones underflow it
    shifted = float(np.mean(np.expm1(expo)))
    if shifted > -0.5:
        log_mean = math.log1p(shifted)
    else:
        log_mean = float(special.logsumexp(expo)) - math.log(m)
    value = log_mean / (alpha - 1.0)
    rel = np.exp(expo - log_mean)
    sd = float(np.std(rel, ddof=1)) if m > 1 else 0.0
    # delta method for log of a mean
    se = sd / math.sqrt(m) / (1.0 - alpha)
    return Estimate(value, se)


def renyi(f: Func, g: Func, alpha: float, design: DesignSample) -> Estimate:
    """alpha-Rényi divergence (1/(alpha-1)) log E exp(alpha(alpha-1)(f-g)^2/2)."""
    X = design.points
    return renyi_from_gap(evaluate(f, X) - evaluate(g, X), alpha)


def clip_factor(alpha: float, M0: float) -> float:
    """Constant c with D_alpha(f, g) >= c ||f - g||^2 when |f|, |g| <= M0."""
    return alpha / 2.0 * math.exp(-2.0 * M0 ** 2 * alpha * (1.0 - alpha))
