"""Command line entry points."""

from __future__ import annotations

import json
import math
import sys
import time
from dataclasses import replace

import click
import numpy as np

from . import kernels


@click.group()
@click.version_option(package_name="htbnn")
def main():
    """Heavy-tailed priors on deep ReLU networks."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--output", type=click.Path(file_okay=False), default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--chains", type=int, default=None)
@click.option("--steps", type=int, default=None)
@click.option("--burnin", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--clip-B", "clip_B", type=float, default=None)
@click.option("--vb-family", type=str, default=None)
@click.option("--vb-steps", type=int, default=None)
@click.option("--vb-lr", type=float, default=None)
@click.option("--vb-mc-samples", type=int, default=None)
@click.option("--workers", type=int, default=None)
def run(config_path, output, **overrides):
    """Run a rate experiment described by a TOML file and write its report."""
    from .bench import ExperimentConfig, emit_report, run_experiment

    cfg = ExperimentConfig.from_toml(config_path)
    changes = {k: v for k, v in overrides.items() if v is not None}
    if output is not None:
        changes["output"] = output
    cfg = replace(cfg, **changes)
    click.echo(f"backend: {kernels.BACKEND}")
    t0 = time.time()
    report = run_experiment(cfg)
    paths = emit_report(report, cfg.output)
    _print_summary(report.summary, report.exponents)
    if cfg.arch_mode == "override":
        click.echo("note: non-theoretical architecture (override)")
    if report.partial:
        click.echo("warning: some runs failed; see results.csv", err=True)
    click.echo(f"wrote {', '.join(paths)} in {time.time() - t0:.1f} s")


def _print_summary(summary: dict, exponents: dict) -> None:
    for method, m in sorted(summary.items()):
        click.echo(f"[{method}]")
        for n, e, s in zip(m["n"], m["mean_error"], m["stderr"]):
            click.echo(f"  n={n:<6d} error={e:.5f} +- {s:.5f}")
        lo, hi = m["slope_ci"]
        click.echo(f"  slope {m['slope']:.4f}  95% CI [{lo:.4f}, {hi:.4f}]  monotone={m['monotone']}")
        for name, ex in sorted(exponents.items()):
            ok = m["slope_within_tolerance"].get(name)
            click.echo(f"  target -{ex:.4f} ({name}): {'within' if ok else 'outside'} +-{m['tolerance']}")


@main.command("certify-prior")
@click.option("--family", "family_name", default="cauchy", show_default=True)
@click.option("--nu", type=float, default=3.0, show_default=True)
@click.option("--kappa", type=float, default=0.0, show_default=True)
def certify_prior(family_name, nu, kappa):
    """Check the tail conditions of a base density; exit status 1 on failure."""
    from .prior import certify, family

    rep = certify(family(family_name, nu), kappa=kappa)
    click.echo(json.dumps(rep.as_dict(), indent=2, default=float))
    sys.exit(0 if rep.passed else 1)


def _approx_target(d: int, beta: float):
    from .constructor import Target
    from .data import get_fixture

    fix = get_fixture("holder1" if beta <= 1 else "holder2", d=d)

    def f(X):
        return fix((np.asarray(X) + 1.0) / 2.0)

    def partial(alpha, X):
        return fix.partial(alpha, (np.asarray(X) + 1.0) / 2.0) * 0.5 ** sum(alpha)

    return Target(f, partial if fix.partial is not None else None), fix


@main.command("approx-check")
@click.option("--d", type=int, default=1, show_default=True)
@click.option("--beta", type=float, default=1.0, show_default=True)
@click.option("--M", "M", type=int, default=8, show_default=True)
@click.option("--F", "F", type=float, default=1.0, show_default=True)
@click.option("--points", type=int, default=20001, show_default=True)
def approx_check(d, beta, M, F, points):
    """Build the constructive approximation of a fixture and measure its sup error."""
    from .constructor import ApproxConfig, wide_net
    from .network import forward, param_count

    target, fix = _approx_target(d, beta)
    cfg = ApproxConfig(d=d, beta=beta, F=F, M=M)
    t0 = time.time()
    net = wide_net(target, cfg)
    built = time.time() - t0
    rng = np.random.default_rng(0)
    if d == 1:
        X = np.linspace(-1.0, 1.0, points)[:, None]
    else:
        X = rng.uniform(-1.0, 1.0, size=(points, d))
    err = float(np.max(np.abs(forward(net, X)[:, 0] - target.f(X))))
    pc = param_count(net.arch)
    out = {"fixture": fix.name, "d": d, "beta": beta, "M": M, "depth": net.depth,
           "max_width": max(net.arch.widths[1:-1]), "T": pc.T, "nonzero": net.nonzero_count(),
           "sup_error": err, "max_coefficient": net.max_abs_coefficient(), "cap": cfg.cap,
           "within_cap": net.max_abs_coefficient() <= cfg.cap, "build_seconds": built}
    click.echo(json.dumps(out, indent=2))


@main.command()
@click.argument("directory", type=click.Path(exists=True, file_okay=False))
def report(directory):
    """Print a stored report and re-check its slopes against results.csv."""
    import os

    from .bench import read_results, summarize

    with open(os.path.join(directory, "summary.json")) as fh:
        stored = json.load(fh)
    records = read_results(os.path.join(directory, "results.csv"))
    fresh = summarize(records, stored["exponents"])
    _print_summary(stored["methods"], stored["exponents"])
    for method, m in stored["methods"].items():
        again = fresh.get(method, {}).get("slope", float("nan"))
        same = (math.isnan(again) and math.isnan(m["slope"])) or abs(again - m["slope"]) <= 1e-9
        click.echo(f"[{method}] slope recomputed from results.csv: {again:.6f} "
                   f"({'matches' if same else 'DIFFERS'})")
    if stored.get("non_theoretical_architecture"):
        click.echo("note: non-theoretical architecture (override)")


@main.command()
@click.option("--fixture", default="additive", show_default=True)
@click.option("--design", "design_name", default="uniform", show_default=True)
@click.option("--n", type=int, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def data(fixture, design_name, n, seed, out_path):
    """Draw a regression sample and write it as CSV (x_1..x_d, y)."""
    from .data import design, gen_data, get_fixture, write_csv

    fix = get_fixture(fixture)
    sample = gen_data(fix, design(design_name, fix.d), n, np.random.default_rng(seed))
    write_csv(sample, out_path)
    click.echo(f"wrote {n} rows to {out_path}")


if __name__ == "__main__":
    main()
