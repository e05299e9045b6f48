"""Ground-truth fixtures, design distributions and regression data.

Fixtures are our own constructions.  Their smoothness is declared, not
re-derived: a fixture states the composition parameters (or the anisotropic
smoothness vector) that its construction satisfies.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .prior import RateSpec


@dataclass(frozen=True)
class RegressionData:
    """Pairs (X_i, Y_i) with unit noise variance; n may be zero."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        Y = np.asarray(self.Y, dtype=np.float64).reshape(-1)
        if X.ndim != 2 or X.shape[0] != Y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]} values")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ValueError("data must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @classmethod
    def empty(cls, d: int) -> "RegressionData":
        return cls(np.zeros((0, d)), np.zeros(0))


# -- one-dimensional building blocks -----------------------------------------

_LIP_TERMS = 12
_LIP_NORM = 2.0 * sum(1.0 / (k + 1) ** 2 for k in range(_LIP_TERMS))


def _tent(x):
    frac = np.mod(x, 1.0)
    return 1.0 - np.abs(2.0 * frac - 1.0)


def rough_lipschitz(x, shift: float = 0.0):
    """1-Lipschitz lacunary tent sum with kinks at every dyadic scale.

    sum_k 2^{-k} (k+1)^{-2} tent(2^k (x + shift)), normalized so the slopes
    add up to at most one.  Values lie in [0, 0.36].
    """
    x = np.asarray(x, dtype=np.float64) + shift
    out = np.zeros_like(x)
    for k in range(_LIP_TERMS):
        out += 2.0 ** (-k) / (k + 1) ** 2 * _tent(2.0 ** k * x)
    return out / _LIP_NORM


_LIP_SUP = sum(2.0 ** (-k) / (k + 1) ** 2 for k in range(_LIP_TERMS)) / _LIP_NORM


def smooth_bump(x, freq: float = 1.0):
    return 0.5 * np.sin(2.0 * math.pi * freq * np.asarray(x, dtype=np.float64))


# -- fixtures ----------------------------------------------------------------

@dataclass(frozen=True)
class TruthFixture:
    name: str
    f0: Callable[[np.ndarray], np.ndarray]
    d: int
    M0: float
    beta: tuple
    t: tuple = ()
    anisotropic: bool = False
    partial: Optional[Callable] = None
    note: str = ""

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.d:
            raise ValueError(f"fixture {self.name} expects d={self.d}, got {X.shape[1]}")
        return np.asarray(self.f0(X), dtype=np.float64).reshape(-1)

    @property
    def effective_smoothness(self) -> np.ndarray:
        return RateSpec.effective_smoothness(self.beta)

    @property
    def harmonic_mean(self) -> float:
        return RateSpec.harmonic_mean(self.beta)

    def exponent(self) -> float:
        """Polynomial rate exponent: min_i beta*_i/(2 beta*_i + t_i), or b/(2b+1) with b the harmonic mean."""
        if self.anisotropic:
            b = self.harmonic_mean
            return b / (2 * b + 1)
        return RateSpec().exponent(self.beta, self.t)


def _zero(d: int = 1) -> TruthFixture:
    return TruthFixture("zero", lambda X: np.zeros(X.shape[0]), d, 0.0, beta=(1.0,), t=(d,),
                        note="identically zero")


def tent_profile(x, shift: float = 0.0):
    """Periodic 1-Lipschitz tent of height 1/2."""
    return 0.5 * _tent(np.asarray(x, dtype=np.float64) + shift)


def _additive(d: int = 4, profile: str = "lacunary") -> TruthFixture:
    shifts = np.linspace(0.0, 0.5, d, endpoint=False)
    if profile == "lacunary":
        comp, sup = rough_lipschitz, _LIP_SUP
    elif profile == "tent":
        comp, sup = tent_profile, 0.5
    else:
        raise ValueError(f"unknown additive profile {profile!r}")

    def f0(X):
        return sum(comp(X[:, j], shifts[j]) for j in range(d))

    # inner layer: d one-dimensional Lipschitz maps; outer layer: their sum,
    # which is linear and so lies in a Hölder ball of any order
    return TruthFixture("additive", f0, d, M0=d * sup, beta=(1.0, 8.0), t=(1, d),
                        note=f"sum of 1-Lipschitz {profile} profiles")


def _single_index(d: int = 3) -> TruthFixture:
    w = np.full(d, 1.0 / d)

    def f0(X):
        return 2.0 * rough_lipschitz(X @ w)

    return TruthFixture("single-index", f0, d, M0=2.0 * _LIP_SUP, beta=(8.0, 1.0), t=(d, 1),
                        note="Lipschitz link of the coordinate mean")


def _holder(beta: float = 1.0, d: int = 1) -> TruthFixture:
    if beta == 1.0:
        def f0(X):
            return sum(rough_lipschitz(X[:, j], 0.1 * j) for j in range(d)) / d
        return TruthFixture("holder1", f0, d, M0=_LIP_SUP, beta=(1.0,), t=(d,),
                            note="averaged Lipschitz tent sums")
    if beta == 2.0:
        def f0(X):
            return np.prod(smooth_bump(X), axis=1) * 2 ** (d - 1)

        def partial(alpha, X):
            out = np.full(X.shape[0], 2.0 ** (d - 1))
            for j, a in enumerate(alpha):
                w = 2.0 * math.pi
                # the a-th derivative of 0.5 sin(w x) is 0.5 w^a sin(w x + a pi/2)
                out *= 0.5 * w ** a * np.sin(w * X[:, j] + a * math.pi / 2)
            return out

        return TruthFixture("holder2", f0, d, M0=0.5, beta=(2.0,), t=(d,), partial=partial,
                            note="smooth product of sines, declared with beta = 2")
    raise ValueError(f"holder fixtures exist for beta in (1, 2), got {beta}")


def _anisotropic(betas: Sequence[float] = (1.0, 4.0)) -> TruthFixture:
    betas = tuple(float(b) for b in betas)
    d = len(betas)

    def factor(b, x, j):
        if b <= 1.0:
            return 0.5 + rough_lipschitz(x, 0.1 * j)
        # cos(2 pi x) is smooth, so any declared index > 1 is a valid upper bound
        return 0.75 + 0.25 * np.cos(2.0 * math.pi * x)

    def f0(X):
        out = np.ones(X.shape[0])
        for j, b in enumerate(betas):
            out *= factor(b, X[:, j], j)
        return out

    M0 = float(np.prod([0.5 + _LIP_SUP if b <= 1.0 else 1.0 for b in betas]))
    return TruthFixture("anisotropic", f0, d, M0=M0, beta=betas,
                        anisotropic=True, note="product of one-dimensional factors")


def _manifold(d: int = 3) -> TruthFixture:
    center = np.full(d, 0.5)

    def f0(X):
        r = np.sqrt(np.sum((X - center) ** 2, axis=1))
        return 3.0 * rough_lipschitz(2.0 * r)

    # composition of a smooth radius and a Lipschitz profile
    return TruthFixture("manifold", f0, d, M0=3.0 * _LIP_SUP, beta=(1.0,), t=(d,),
                        note="Lipschitz radial profile; paired with curve designs")


_CATALOG = {
    "zero": _zero,
    "additive": _additive,
    "single-index": _single_index,
    "holder1": lambda d=1: _holder(1.0, d),
    "holder2": lambda d=1: _holder(2.0, d),
    "anisotropic": _anisotropic,
    "manifold": _manifold,
}


def fixtures() -> dict:
    """Name to factory map; factories take optional size parameters."""
    return dict(_CATALOG)


def get_fixture(name: str, **params) -> TruthFixture:
    try:
        factory = _CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; choose from {sorted(_CATALOG)}") from None
    return factory(**params)


# -- designs -----------------------------------------------------------------

def parabola(t):
    t = np.asarray(t, dtype=np.float64)
    return np.column_stack([t, t * t])


def helix(t):
    t = np.asarray(t, dtype=np.float64)
    return np.column_stack([t, 0.5 + 0.45 * np.sin(4 * math.pi * t), 0.5 + 0.45 * np.cos(4 * math.pi * t)])


_CURVES = {"parabola": (parabola, 2), "helix": (helix, 3)}


@dataclass(frozen=True)
class DesignSpec:
    """``uniform``, ``manifold`` (a map from [0,1]^{d*} into the cube) or ``custom``."""

    kind: str
    d: int
    intrinsic_dim: Optional[int] = None
    embedding: Optional[Callable] = None
    sampler: Optional[Callable] = None
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("uniform", "manifold", "custom"):
            raise ValueError(f"unknown design kind {self.kind!r}")
        if self.kind == "manifold":
            if self.embedding is None or self.intrinsic_dim is None:
                raise ValueError("manifold design needs an embedding and its dimension")
            if not self.intrinsic_dim < self.d:
                raise ValueError("manifold design needs intrinsic dimension below d")
        if self.kind == "custom" and self.sampler is None:
            raise ValueError("custom design needs a sampler")

    @property
    def dimension(self) -> int:
        return self.d if self.intrinsic_dim is None else self.intrinsic_dim

    def sample(self, m: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "uniform":
            X = rng.uniform(size=(m, self.d))
        elif self.kind == "manifold":
            u = rng.uniform(size=(m, self.intrinsic_dim))
            X = np.asarray(self.embedding(u[:, 0] if self.intrinsic_dim == 1 else u))
        else:
            X = np.asarray(self.sampler(m, rng), dtype=np.float64)
        X = X.reshape(m, self.d)
        if np.any(X < 0.0) or np.any(X > 1.0):
            raise ValueError(f"design {self.label or self.kind} produced points outside the cube")
        return X


def uniform_cube(d: int) -> DesignSpec:
    return DesignSpec("uniform", d, label=f"uniform-{d}")


def curve(name: str) -> DesignSpec:
    emb, d = _CURVES[name]
    return DesignSpec("manifold", d, intrinsic_dim=1, embedding=emb, label=name)


def design(name: str, d: int) -> DesignSpec:
    if name == "uniform":
        return uniform_cube(d)
    if name in _CURVES:
        spec = curve(name)
        if spec.d != d:
            raise ValueError(f"curve {name} lives in d={spec.d}, not {d}")
        return spec
    raise KeyError(f"unknown design {name!r}")


def gen_data(fix: TruthFixture, spec: DesignSpec, n: int, rng: np.random.Generator) -> RegressionData:
    if n < 1:
        raise ValueError("n must be at least 1")
    if spec.d != fix.d:
        raise ValueError(f"design dimension {spec.d} differs from fixture dimension {fix.d}")
    X = spec.sample(n, rng)
    return RegressionData(X, fix(X) + rng.standard_normal(n))


def write_csv(data: RegressionData, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x_{j + 1}" for j in range(data.d)] + ["y"])
        for x, y in zip(data.X, data.Y):
            w.writerow([repr(float(v)) for v in x] + [repr(float(y))])


def read_csv(path) -> RegressionData:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], np.array(rows[1:], dtype=np.float64).reshape(-1, len(rows[0]))
    return RegressionData(body[:, :-1].reshape(-1, len(head) - 1), body[:, -1])


# -- box counting ------------------------------------------------------------

def box_counts(points: np.ndarray, radii: Sequence[float]) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    out = []
    for eps in radii:
        cells = np.floor(pts / eps).astype(np.int64)
        out.append(np.unique(cells, axis=0).shape[0])
    return np.array(out)


def minkowski_estimate(points: np.ndarray, radii: Optional[Sequence[float]] = None) -> float:
    """Box-counting dimension: least-squares slope of log N(eps) against log(1/eps).

    Without explicit radii, dyadic scales are used down to the point where the
    count reaches a twentieth of the sample size, so that the fit stays away
    from saturation.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if np.unique(pts, axis=0).shape[0] <= 1:
        return 0.0
    if radii is None:
        radii = []
        limit = pts.shape[0] / 20.0
        for k in range(2, 30):
            eps = 2.0 ** (-k)
            if box_counts(pts, [eps])[0] > limit:
                break
            radii.append(eps)
        if len(radii) < 2:
            radii = [0.5, 0.25]
    radii = np.asarray(radii, dtype=np.float64)
    if np.any(np.diff(radii) >= 0):
        raise ValueError("radii must be decreasing")
    counts = box_counts(pts, radii)
    slope, _ = np.polyfit(np.log(1.0 / radii), np.log(counts), 1)
    return float(slope)
