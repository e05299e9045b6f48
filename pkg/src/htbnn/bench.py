"""Rate experiments: architecture choice, runs over an n-grid, slope fits and reports."""

from __future__ import annotations

import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .data import design, gen_data, get_fixture
from .mcmc import TemperConfig, posterior_predict, run_chain
from .network import Architecture, Network
from .prior import Prior, ScalingSchedule, family
from .vb import VBConfig, fit_vb

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


# -- architecture ------------------------------------------------------------

ARCH_MODES = ("compwi", "largewi", "logn", "override")


@dataclass(frozen=True)
class ArchitectureChoice:
    arch: Architecture
    mode: str
    theoretical: bool


def log_depth(n: int, delta: float) -> int:
    return math.ceil(math.log(n) ** (1 + delta))


def choose_architecture(n: int, d: int, mode: str = "compwi", delta: float = 0.05,
                        widths: Optional[Sequence[int]] = None) -> ArchitectureChoice:
    """Depth ceil(log^{1+delta} n) with interior widths ceil(sqrt n) (``compwi``) or n
    (``largewi``); ``logn`` uses depth ceil(log n) and width ceil(sqrt n).
    ``override`` returns ``widths`` as given, flagged as non-theoretical."""
    if mode == "override":
        if widths is None:
            raise ValueError("override mode needs explicit widths")
        arch = Architecture.from_widths(widths)
        if arch.d != d:
            raise ValueError(f"override widths start with {arch.d}, data has d={d}")
        return ArchitectureChoice(arch, mode, False)
    if n < 3:
        raise ValueError("n must be at least 3")
    if mode == "compwi":
        L, w = log_depth(n, delta), math.ceil(math.sqrt(n))
    elif mode == "largewi":
        L, w = log_depth(n, delta), n
    elif mode == "logn":
        L, w = math.ceil(math.log(n)), math.ceil(math.sqrt(n))
    else:
        raise ValueError(f"unknown architecture mode {mode!r}; choose from {ARCH_MODES}")
    return ArchitectureChoice(Architecture(L, (d,) + (w,) * L + (1,)), mode, True)


def block_sparsity_holds(net: Network, r_star: int) -> bool:
    """True when every hidden coefficient outside the leading r* x r* blocks is zero."""
    for l, (W, v) in enumerate(net.layers):
        rows = W.shape[0] if l == net.depth else min(r_star, W.shape[0])
        cols = W.shape[1] if l == 0 else min(r_star, W.shape[1])
        if np.any(W[rows:, :]) or np.any(W[:, cols:]) or np.any(v[rows:]):
            return False
    return True


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    fixture: str = "additive"
    fixture_params: dict = field(default_factory=dict)
    design: str = "uniform"
    n_grid: tuple = (128, 256, 512, 1024, 2048, 4096)
    alpha: float = 0.5
    delta: float = 0.05
    prior_family: str = "student"
    prior_nu: float = 3.0
    schedule: str = "directed"
    method: str = "mcmc"
    replications: int = 5
    seed: int = 0
    output: str = "results"
    arch_mode: str = "override"
    widths: Optional[tuple] = None
    clip_B: Optional[float] = None
    eval_points: int = 100_000
    workers: int = 1
    # sampler
    steps: int = 2000
    burnin: int = 2000
    thin: int = 10
    chains: int = 1
    refresh_prob: float = 0.1
    # variational fit
    vb_family: str = "student"
    vb_steps: int = 2000
    vb_lr: float = 0.02
    vb_mc_samples: int = 4
    vb_predict_samples: int = 200

    def __post_init__(self):
        grid = tuple(int(n) for n in self.n_grid)
        object.__setattr__(self, "n_grid", grid)
        if self.widths is not None:
            object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("n_grid must be increasing")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if self.method not in ("mcmc", "vb", "both"):
            raise ValueError("method must be mcmc, vb or both")
        if self.arch_mode not in ARCH_MODES:
            raise ValueError(f"arch_mode must be one of {ARCH_MODES}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")

    @property
    def methods(self) -> tuple:
        return ("mcmc", "vb") if self.method == "both" else (self.method,)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    @classmethod
    def from_toml(cls, path) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))

    def as_dict(self) -> dict:
        out = asdict(self)
        out["n_grid"] = list(self.n_grid)
        if self.widths is not None:
            out["widths"] = list(self.widths)
        return out


# -- runs --------------------------------------------------------------------

@dataclass(frozen=True)
class RunRecord:
    n: int
    replication: int
    method: str
    error: float
    status: str = "ok"


def _prior(cfg: ExperimentConfig, n: int) -> Prior:
    return Prior(family(cfg.prior_family, cfg.prior_nu),
                 ScalingSchedule(mode=cfg.schedule, n=n, delta=cfg.delta))


def _task(cfg: ExperimentConfig, n: int, rep: int, seed_seq) -> list[RunRecord]:
    fix = get_fixture(cfg.fixture, **cfg.fixture_params)
    spec = design(cfg.design, fix.d)
    data_seq, eval_seq, mcmc_seq, vb_seq = seed_seq.spawn(4)
    data = gen_data(fix, spec, n, np.random.default_rng(data_seq))
    X_eval = spec.sample(cfg.eval_points, np.random.default_rng(eval_seq))
    truth = fix(X_eval)
    B = cfg.clip_B if cfg.clip_B is not None else 1.1 * max(fix.M0, 1e-3)
    arch = choose_architecture(n, fix.d, cfg.arch_mode, cfg.delta, cfg.widths).arch
    prior = _prior(cfg, n)
    out = []
    for method in cfg.methods:
        try:
            if method == "mcmc":
                tc = TemperConfig(alpha=cfg.alpha, steps=cfg.steps, burnin=cfg.burnin,
                                  thin=cfg.thin, chains=cfg.chains, refresh_prob=cfg.refresh_prob,
                                  seed=int(mcmc_seq.generate_state(1)[0]))
                chain = run_chain(data, arch, prior, tc)
                pred = posterior_predict(chain, X_eval, B).mean
            else:
                vc = VBConfig(steps=cfg.vb_steps, lr=cfg.vb_lr, mc_samples=cfg.vb_mc_samples,
                              seed=int(vb_seq.generate_state(1)[0]))
                h = family(cfg.vb_family, cfg.prior_nu)
                state, _ = fit_vb(data, arch, prior, cfg.alpha, vc, h=h)
                rng = np.random.default_rng(vb_seq.spawn(1)[0])
                pred = posterior_predict(state.sample(rng, cfg.vb_predict_samples), X_eval, B,
                                         arch=arch).mean
            err = math.sqrt(float(np.mean((pred - truth) ** 2)))
            out.append(RunRecord(n, rep, method, err))
        except Exception as exc:  # recorded, the experiment goes on
            out.append(RunRecord(n, rep, method, float("nan"), f"failed: {type(exc).__name__}: {exc}"))
    return out


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    ci_low: float
    ci_high: float


def fit_slope(ns: Sequence[float], errors: Sequence[float], level: float = 0.95) -> SlopeFit:
    """Least-squares slope of log error against log n with a t-interval."""
    x = np.log(np.asarray(ns, dtype=np.float64))
    y = np.log(np.asarray(errors, dtype=np.float64))
    ok = np.isfinite(y)
    x, y = x[ok], y[ok]
    if x.size < 2:
        return SlopeFit(float("nan"), float("nan"), float("nan"), float("nan"))
    res = stats.linregress(x, y)
    if x.size > 2:
        q = stats.t.ppf(0.5 + level / 2, x.size - 2)
        half = q * res.stderr
    else:
        half = float("inf")
    return SlopeFit(float(res.slope), float(res.intercept), float(res.slope - half),
                    float(res.slope + half))


@dataclass
class RateReport:
    config: dict
    records: list
    exponents: dict
    summary: dict = field(default_factory=dict)

    @property
    def partial(self) -> bool:
        return any(r.status != "ok" for r in self.records)


def summarize(records: Sequence[RunRecord], exponents: dict, tolerance: float = 0.15) -> dict:
    out = {}
    for method in sorted({r.method for r in records}):
        rows = [r for r in records if r.method == method and r.status == "ok"]
        ns = sorted({r.n for r in rows})
        means, ses = [], []
        for n in ns:
            e = np.array([r.error for r in rows if r.n == n])
            means.append(float(e.mean()))
            ses.append(float(e.std(ddof=1) / math.sqrt(e.size)) if e.size > 1 else 0.0)
        fit = fit_slope(ns, means)
        increases, beyond = 0, 0
        for k in range(len(ns) - 1):
            if means[k + 1] > means[k]:
                increases += 1
                if means[k + 1] - means[k] > math.hypot(ses[k], ses[k + 1]):
                    beyond += 1
        verdicts = {name: bool(abs(fit.slope + ex) <= tolerance) for name, ex in exponents.items()}
        out[method] = {
            "n": ns, "mean_error": means, "stderr": ses,
            "slope": fit.slope, "intercept": fit.intercept,
            "slope_ci": [fit.ci_low, fit.ci_high],
            "monotone": bool(beyond == 0 and increases <= 1),
            "increases": increases, "increases_beyond_stderr": beyond,
            "slope_within_tolerance": verdicts, "tolerance": tolerance,
        }
    return out


def theoretical_exponents(cfg: ExperimentConfig) -> dict:
    fix = get_fixture(cfg.fixture, **cfg.fixture_params)
    spec = design(cfg.design, fix.d)
    out = {"smoothness": fix.exponent()}
    if spec.kind == "manifold" and not fix.anisotropic and len(fix.beta) == 1:
        b = fix.beta[0]
        out["intrinsic"] = b / (2 * b + spec.dimension)
    return out


def run_experiment(cfg: ExperimentConfig) -> RateReport:
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(cfg.n_grid) * cfg.replications)
    jobs = [(cfg, n, rep, seeds[i * cfg.replications + rep])
            for i, n in enumerate(cfg.n_grid) for rep in range(cfg.replications)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            parts = list(pool.map(_task_star, jobs))
    else:
        parts = [_task(*job) for job in jobs]
    records = [r for part in parts for r in part]
    exps = theoretical_exponents(cfg)
    return RateReport(cfg.as_dict(), records, exps, summarize(records, exps))


def _task_star(job):
    return _task(*job)


# -- output ------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def emit_report(report: RateReport, out_dir) -> list[str]:
    """Write results.csv, summary.json and rate_plot.svg; identical reports give identical bytes."""
    os.makedirs(out_dir, exist_ok=True)
    if not os.access(out_dir, os.W_OK):
        raise PermissionError(f"cannot write to {out_dir}")
    paths = [os.path.join(out_dir, name) for name in ("results.csv", "summary.json", "rate_plot.svg")]
    with open(paths[0], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "replication", "error", "method", "status"])
        for r in report.records:
            w.writerow([r.n, r.replication, _fmt(r.error), r.method, r.status])
    arch_flag = report.config.get("arch_mode") == "override"
    payload = {"config": report.config, "exponents": report.exponents,
               "methods": report.summary, "partial": report.partial,
               "non_theoretical_architecture": arch_flag}
    with open(paths[1], "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(paths[2], "w") as fh:
        fh.write(render_svg(report))
    return paths


def read_results(path) -> list[RunRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [RunRecord(int(r["n"]), int(r["replication"]), r["method"], float(r["error"]), r["status"])
            for r in rows]


_COLORS = {"mcmc": "#1f77b4", "vb": "#d62728"}


def render_svg(report: RateReport, width: int = 640, height: int = 420) -> str:
    """Log-log plot of mean error against n with one reference line per exponent."""
    pad = 60
    pts = [(n, e) for m in report.summary.values() for n, e in zip(m["n"], m["mean_error"])
           if e > 0 and math.isfinite(e)]
    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             '<rect width="100%" height="100%" fill="white"/>']
    if pts:
        lx = [math.log(n) for n, _ in pts]
        ly = [math.log(e) for _, e in pts]
        x0, x1 = min(lx) - 0.1, max(lx) + 0.1
        y0, y1 = min(ly) - 0.5, max(ly) + 0.5
    else:
        x0, x1, y0, y1 = 0.0, 1.0, 0.0, 1.0

    def sx(v):
        return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(v):
        return height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)

    lines.append(f'<line class="axis" x1="{pad}" y1="{height - pad}" x2="{width - pad}" '
                 f'y2="{height - pad}" stroke="black"/>')
    lines.append(f'<line class="axis" x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>')
    lines.append(f'<text x="{width / 2:.1f}" y="{height - 20}" text-anchor="middle">log n</text>')
    lines.append(f'<text x="20" y="{height / 2:.1f}" text-anchor="middle" '
                 f'transform="rotate(-90 20 {height / 2:.1f})">log L2 error</text>')
    anchor = (sum(lx) / len(lx), sum(ly) / len(ly)) if pts else (0.5, 0.5)
    for name, ex in sorted(report.exponents.items()):
        ya = anchor[1] - ex * (x0 - anchor[0])
        yb = anchor[1] - ex * (x1 - anchor[0])
        lines.append(f'<line class="reference" data-exponent="{ex:.6f}" data-name="{name}" '
                     f'x1="{sx(x0):.2f}" y1="{sy(ya):.2f}" x2="{sx(x1):.2f}" y2="{sy(yb):.2f}" '
                     f'stroke="gray" stroke-dasharray="6 4"/>')
    for method, m in sorted(report.summary.items()):
        color = _COLORS.get(method, "black")
        for n, e in zip(m["n"], m["mean_error"]):
            if e > 0 and math.isfinite(e):
                lines.append(f'<circle class="point" data-method="{method}" cx="{sx(math.log(n)):.2f}" '
                             f'cy="{sy(math.log(e)):.2f}" r="4" fill="{color}"/>')
        if math.isfinite(m["slope"]):
            ya = m["intercept"] + m["slope"] * x0
            yb = m["intercept"] + m["slope"] * x1
            lines.append(f'<line class="fit" data-method="{method}" x1="{sx(x0):.2f}" '
                         f'y1="{sy(ya):.2f}" x2="{sx(x1):.2f}" y2="{sy(yb):.2f}" stroke="{color}"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
