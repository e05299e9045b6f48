"""Tempered posterior over network coefficients and a Metropolis sampler.

The target is

    log pi_alpha(theta) = -(alpha / 2) sum_i (Y_i - f_theta(X_i))^2 + log prior(theta),

up to a constant that depends on the data only.  The sampler updates one
coefficient at a time.  Each update is either a Gaussian random walk whose
scale is tied to the prior scale of that coefficient, or, with probability
``refresh_prob``, an independence proposal drawn from the prior marginal.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from . import kernels
from .data import RegressionData
from .network import Architecture, Network, clip, param_count, coefficient_index
from .prior import CUSTOM, Prior, draw_scaled, log_scaled_density


@dataclass(frozen=True)
class TemperConfig:
    alpha: float = 0.5
    steps: int = 2000
    burnin: int = 1000
    thin: int = 1
    seed: int = 0
    scale: float = 1.0
    refresh_prob: float = 0.1
    adapt_batch: int = 50
    target_accept: float = 0.44
    chains: int = 1
    backend: Optional[str] = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie strictly inside (0, 1), got {self.alpha}")
        if self.steps < 1 or self.thin < 1 or self.chains < 1 or self.adapt_batch < 1:
            raise ValueError("steps, thin, chains and adapt_batch must be positive")
        if self.burnin < 0:
            raise ValueError("burnin must be nonnegative")
        if not 0.0 <= self.refresh_prob <= 1.0:
            raise ValueError("refresh_prob must be a probability")
        if not self.scale > 0:
            raise ValueError("scale must be positive")


def log_tempered_posterior(net: Network, data: RegressionData, alpha: float, prior: Prior) -> float:
    theta = net.to_vector()
    lp = prior.logpdf(theta, net.arch)
    if data.n == 0:
        return lp
    resid = data.Y - net(data.X)[:, 0]
    return float(-0.5 * alpha * np.dot(resid, resid) + lp)


# -- layout shared by both kernel backends -----------------------------------

@dataclass(frozen=True)
class _Layout:
    widths: np.ndarray
    toff: np.ndarray
    hoff: np.ndarray
    layer: np.ndarray
    row: np.ndarray
    col: np.ndarray
    hidden: int

    @classmethod
    def of(cls, arch: Architecture) -> "_Layout":
        w = np.asarray(arch.widths, dtype=np.int_)
        L = arch.depth
        toff = np.zeros(L + 1, dtype=np.int_)
        for l in range(1, L + 1):
            toff[l] = toff[l - 1] + w[l] * (w[l - 1] + 1)
        hoff = np.zeros(L, dtype=np.int_)
        for l in range(1, L):
            hoff[l] = hoff[l - 1] + w[l]
        idx = coefficient_index(arch)
        return cls(w, toff, hoff, (idx[:, 0] - 1).astype(np.int_), (idx[:, 1] - 1).astype(np.int_),
                   idx[:, 2].astype(np.int_), int(w[1:L + 1].sum()))


@dataclass
class ChainState:
    """Current coefficients with cached forward quantities."""

    theta: np.ndarray
    Z: np.ndarray
    A: np.ndarray
    out: np.ndarray
    sse: float
    log_post: float
    accepted: int = 0
    proposed: int = 0

    def recompute(self, arch: Architecture, data: RegressionData, alpha: float, prior: Prior) -> float:
        return log_tempered_posterior(Network.from_vector(arch, self.theta), data, alpha, prior)


@dataclass
class ChainResult:
    arch: Architecture
    samples: np.ndarray
    log_post: np.ndarray
    chain_id: np.ndarray
    free: np.ndarray
    accept_rw: float
    accept_refresh: float
    accept_by_coord: np.ndarray
    rhat: float
    rhat_log_post: float
    reinit: int
    backend: str
    config: TemperConfig
    final_states: list = field(default_factory=list, repr=False)

    def __len__(self) -> int:
        return self.samples.shape[0]

    def networks(self) -> Iterator[Network]:
        for row in self.samples:
            yield Network.from_vector(self.arch, row)

    @property
    def diagnostics(self) -> dict:
        return {"accept_rw": self.accept_rw, "accept_refresh": self.accept_refresh,
                "rhat": self.rhat, "rhat_log_post": self.rhat_log_post,
                "reinit": self.reinit, "backend": self.backend, "samples": len(self)}


def split_rhat(draws: np.ndarray, chain_id: np.ndarray) -> np.ndarray:
    """Split potential scale reduction per column of ``draws``.

    Each chain is cut into two halves, which are then treated as separate chains.
    """
    draws = np.asarray(draws, dtype=np.float64)
    if draws.ndim == 1:
        draws = draws[:, None]
    pieces = []
    for c in np.unique(chain_id):
        x = draws[chain_id == c]
        h = x.shape[0] // 2
        if h < 2:
            return np.full(draws.shape[1], np.nan)
        pieces += [x[:h], x[h:2 * h]]
    n = min(p.shape[0] for p in pieces)
    stack = np.stack([p[:n] for p in pieces])
    means = stack.mean(axis=1)
    B = n * means.var(axis=0, ddof=1)
    W = stack.var(axis=1, ddof=1).mean(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        var_plus = (n - 1) / n * W + B / n
        return np.where(W > 0, np.sqrt(var_plus / W), np.nan)


def _init_state(arch, layout, data, prior, alpha, theta0, free, rng, kmod, max_tries=100):
    L_vec = prior.log_inv_sigma(arch)
    theta = np.array(theta0 if theta0 is not None else draw_scaled(prior.density, L_vec, rng),
                     dtype=np.float64)
    n = data.n
    H = max(layout.hidden, 1)
    Z = np.zeros((n, H))
    A = np.zeros((n, H))
    out = np.zeros(n)
    tries = 0
    while True:
        with np.errstate(over="ignore", invalid="ignore"):
            kmod.forward_cache(theta, layout.widths, layout.toff, layout.hoff, data.X, Z, A, out)
            resid = data.Y - out
            sse = float(np.dot(resid, resid))
            lp = float(np.sum(log_scaled_density(prior.density, theta, L_vec)))
        log_post = -0.5 * alpha * sse + lp
        if math.isfinite(log_post) and np.all(np.isfinite(Z)):
            return ChainState(theta, Z, A, out, sse, log_post), tries
        tries += 1
        if tries > max_tries:
            raise RuntimeError(f"no finite starting point after {max_tries} prior draws")
        fresh = draw_scaled(prior.density, L_vec, rng)
        theta[free] = fresh[free]


def _random_block(rng, h, L_free, sweeps, refresh_prob):
    c = L_free.size
    u_move = rng.random((sweeps, c))
    normals = rng.standard_normal((sweeps, c))
    if refresh_prob > 0:
        refresh = draw_scaled(h, np.broadcast_to(L_free, (sweeps, c)), rng)
    else:
        refresh = np.zeros((sweeps, c))
    u_acc = rng.random((sweeps, c))
    return u_move, normals, np.ascontiguousarray(refresh), u_acc


def _run_one(data, arch, prior, cfg, seed_seq, theta0, free, kmod):
    rng = np.random.default_rng(seed_seq)
    layout = _Layout.of(arch)
    h = prior.density
    state, tries = _init_state(arch, layout, data, prior, cfg.alpha, theta0, free, rng, kmod)
    L_vec = prior.log_inv_sigma(arch)
    L_free = L_vec[free]
    sigma = np.exp(-L_free)
    log_mult = np.zeros(free.size)
    T = param_count(arch).T
    nc = free.size
    acc_rw = np.zeros(nc, dtype=np.int_)
    try_rw = np.zeros(nc, dtype=np.int_)
    acc_ref = np.zeros(nc, dtype=np.int_)
    try_ref = np.zeros(nc, dtype=np.int_)
    zbuf = np.zeros_like(state.Z)
    common = dict(family=int(h.kind), nu=float(h.nu) if h.kind == 0 else 1.0,
                  log_norm=float(h.log_norm), refresh_prob=float(cfg.refresh_prob),
                  custom=h.log_h_from_log_abs if h.kind == CUSTOM else None)

    def sweep(n_sweeps, thin, scale, a_rw, t_rw, a_ref, t_ref):
        blocks = _random_block(rng, h, L_free, n_sweeps, cfg.refresh_prob)
        n_rec = n_sweeps // thin
        samples = np.zeros((n_rec, T))
        sse_tr = np.zeros(n_rec)
        with np.errstate(over="ignore", invalid="ignore"):
            state.sse = kmod.run_sweeps(
                state.theta, layout.widths, layout.toff, layout.hoff, data.X, data.Y,
                state.Z, state.A, state.out, layout.layer, layout.row, layout.col, free,
                np.ascontiguousarray(scale), L_vec, *blocks, float(cfg.alpha),
                common["family"], common["nu"], common["log_norm"], common["refresh_prob"],
                a_rw, t_rw, a_ref, t_ref, int(thin), samples, sse_tr, zbuf, common["custom"])
        return samples, sse_tr

    # burn-in with batchwise adaptation of the per-coordinate multipliers
    done, batch = 0, 0
    while done < cfg.burnin:
        b = min(cfg.adapt_batch, cfg.burnin - done)
        a_rw = np.zeros(nc, dtype=np.int_)
        t_rw = np.zeros(nc, dtype=np.int_)
        sweep(b, b + 1, cfg.scale * sigma * np.exp(log_mult), a_rw, t_rw,
              np.zeros(nc, dtype=np.int_), np.zeros(nc, dtype=np.int_))
        batch += 1
        rate = np.where(t_rw > 0, a_rw / np.maximum(t_rw, 1), cfg.target_accept)
        step = math.log(3.0) / math.sqrt(batch)
        log_mult += np.where(rate > cfg.target_accept, step, -step) * (t_rw > 0)
        done += b

    scale = np.ascontiguousarray(cfg.scale * sigma * np.exp(log_mult))
    chunk = max(cfg.thin, (2_000_000 // max(nc, 1)) // cfg.thin * cfg.thin)
    rows, sses = [], []
    left = cfg.steps - cfg.steps % cfg.thin
    while left > 0:
        b = min(chunk, left)
        s, e = sweep(b, cfg.thin, scale, acc_rw, try_rw, acc_ref, try_ref)
        rows.append(s)
        sses.append(e)
        left -= b
    samples = np.concatenate(rows) if rows else np.zeros((0, T))
    sse = np.concatenate(sses) if sses else np.zeros(0)
    with np.errstate(divide="ignore"):
        lp = np.sum(log_scaled_density(h, samples, L_vec), axis=1) if samples.size else np.zeros(0)
    log_post = -0.5 * cfg.alpha * sse + lp
    resid = data.Y - state.out
    state.sse = float(np.dot(resid, resid))
    state.log_post = float(-0.5 * cfg.alpha * state.sse
                           + np.sum(log_scaled_density(h, state.theta, L_vec)))
    state.accepted = int(acc_rw.sum() + acc_ref.sum())
    state.proposed = int(try_rw.sum() + try_ref.sum())
    return samples, log_post, (acc_rw, try_rw, acc_ref, try_ref), tries, state


def run_chain(data: RegressionData, arch: Architecture, prior: Prior, cfg: TemperConfig,
              init: Optional[np.ndarray] = None, free: Optional[Sequence[int]] = None) -> ChainResult:
    """Sample the tempered posterior.

    ``init`` fixes the starting coefficients (a prior draw otherwise).  ``free``
    restricts the updates to a subset of coordinates; the others stay at their
    initial values, which gives sub-models such as a constant function.
    """
    if data.d != arch.d:
        raise ValueError(f"data dimension {data.d} differs from the input width {arch.d}")
    if arch.out_dim != 1:
        raise ValueError("the sampler handles scalar-output networks")
    T = param_count(arch).T
    free_idx = np.arange(T, dtype=np.int_) if free is None else np.asarray(free, dtype=np.int_)
    if free_idx.size == 0 or free_idx.min() < 0 or free_idx.max() >= T:
        raise ValueError("free coordinates must be a nonempty subset of range(T)")
    if init is not None:
        init = np.asarray(init, dtype=np.float64).reshape(-1)
        if init.size != T:
            raise ValueError(f"init has {init.size} coefficients, architecture needs {T}")
    elif free is not None:
        raise ValueError("a free-coordinate subset needs explicit init values")
    backend = cfg.backend
    if prior.density.kind == CUSTOM:
        backend = "python"
    kmod = kernels.get(backend)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.chains)
    all_s, all_lp, ids, states = [], [], [], []
    stats = np.zeros((4, free_idx.size), dtype=np.int64)
    reinit = 0
    for c, ss in enumerate(seeds):
        s, lp, st, tries, state = _run_one(data, arch, prior, cfg, ss, init, free_idx, kmod)
        all_s.append(s)
        all_lp.append(lp)
        ids.append(np.full(s.shape[0], c))
        stats += np.array(st)
        reinit += tries
        states.append(state)
    samples = np.concatenate(all_s)
    log_post = np.concatenate(all_lp)
    chain_id = np.concatenate(ids)
    a_rw, t_rw, a_ref, t_ref = stats
    rh = split_rhat(samples[:, free_idx], chain_id)
    rh_lp = split_rhat(log_post, chain_id)[0]
    finite = rh[np.isfinite(rh)]
    return ChainResult(
        arch=arch, samples=samples, log_post=log_post, chain_id=chain_id, free=free_idx,
        accept_rw=float(a_rw.sum() / max(t_rw.sum(), 1)),
        accept_refresh=float(a_ref.sum() / max(t_ref.sum(), 1)),
        accept_by_coord=a_rw / np.maximum(t_rw, 1),
        rhat=float(finite.max()) if finite.size else float("nan"),
        rhat_log_post=float(rh_lp), reinit=reinit, backend=kmod.NAME, config=cfg,
        final_states=states)


# -- prediction --------------------------------------------------------------

@dataclass(frozen=True)
class Prediction:
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def sample_values(arch: Architecture, thetas: np.ndarray, X: np.ndarray, backend=None) -> np.ndarray:
    """Function values of every coefficient row at every point, shape (m, n)."""
    kmod = kernels.get(backend)
    layout = _Layout.of(arch)
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    out = np.empty((thetas.shape[0], X.shape[0]))
    with np.errstate(over="ignore", invalid="ignore"):
        for k, row in enumerate(thetas):
            out[k] = kmod.forward_theta(np.ascontiguousarray(row), layout.widths, layout.toff, X)[:, 0]
    return out


def posterior_predict(chain, X: np.ndarray, B: float, arch: Optional[Architecture] = None,
                      level: float = 0.9) -> Prediction:
    """Mean and pointwise bands of the clipped posterior at the rows of ``X``.

    ``chain`` is a :class:`ChainResult`, a sequence of networks, or a matrix of
    coefficient rows together with ``arch``.
    """
    if isinstance(chain, ChainResult):
        arch, thetas = chain.arch, chain.samples
    elif arch is not None:
        thetas = np.atleast_2d(np.asarray(chain, dtype=np.float64))
    else:
        nets = list(chain)
        if not nets:
            raise ValueError("empty chain")
        arch, thetas = nets[0].arch, np.stack([n.to_vector() for n in nets])
    if thetas.shape[0] == 0:
        raise ValueError("empty chain")
    vals = clip(np.nan_to_num(sample_values(arch, thetas, X), nan=0.0), B)
    tail = (1.0 - level) / 2.0
    lower, upper = np.quantile(vals, [tail, 1.0 - tail], axis=0)
    return Prediction(vals.mean(axis=0), lower, upper)


# -- checkpoints -------------------------------------------------------------

_CKPT = "htbnn-chain/1"


def save_chain(result: ChainResult, path) -> None:
    meta = {"format": _CKPT, "depth": result.arch.depth, "widths": list(result.arch.widths),
            "config": asdict(result.config), "diagnostics": result.diagnostics}
    buf = io.BytesIO()
    np.savez(buf, header=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
             samples=result.samples, log_post=result.log_post, chain_id=result.chain_id,
             free=result.free, accept_by_coord=result.accept_by_coord)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_chain(path) -> ChainResult:
    with np.load(path) as z:
        meta = json.loads(z["header"].tobytes().decode())
        if meta.get("format") != _CKPT:
            raise ValueError(f"unknown checkpoint format {meta.get('format')!r}")
        diag = meta["diagnostics"]
        return ChainResult(
            arch=Architecture(meta["depth"], tuple(meta["widths"])), samples=z["samples"],
            log_post=z["log_post"], chain_id=z["chain_id"], free=z["free"],
            accept_rw=diag["accept_rw"], accept_refresh=diag["accept_refresh"],
            accept_by_coord=z["accept_by_coord"], rhat=diag["rhat"],
            rhat_log_post=diag["rhat_log_post"], reinit=diag["reinit"],
            backend=diag["backend"], config=TemperConfig(**meta["config"]))
