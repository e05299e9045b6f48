"""Time the compiled and pure-numpy kernels on the same workload.

    python benchmarks/bench_kernels.py [--n 512] [--steps 40] [--widths 4,12,12,1]
"""

import argparse
import time

import numpy as np

from htbnn import kernels
from htbnn.data import design, gen_data, get_fixture
from htbnn.mcmc import TemperConfig, _Layout, run_chain
from htbnn.network import Architecture
from htbnn.prior import Prior, ScalingSchedule, cauchy


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=512)
    ap.add_argument("--steps", type=int, default=40)
    ap.add_argument("--widths", default="4,12,12,1")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    arch = Architecture.from_widths([int(w) for w in args.widths.split(",")])
    fix = get_fixture("additive", d=arch.d)
    data = gen_data(fix, design("uniform", arch.d), args.n, np.random.default_rng(0))
    prior = Prior(cauchy(), ScalingSchedule("directed", n=args.n))
    cfg = dict(steps=args.steps, burnin=args.steps, seed=1)
    theta = prior.sample_vector(arch, np.random.default_rng(2))
    lay = _Layout.of(arch)

    backends = kernels.available()
    rows = {}
    for name in backends:
        mod = kernels.get(name)
        t_chain, res = _best(lambda: run_chain(data, arch, prior, TemperConfig(backend=name, **cfg)), args.repeat)
        t_fwd, _ = _best(lambda: mod.forward_theta(theta, lay.widths, lay.toff, data.X), args.repeat * 10)
        rows[name] = (t_chain, t_fwd, res.samples[-1])
        sweeps = 2 * args.steps
        print(f"{name:>7}: chain {t_chain:8.3f} s ({sweeps / t_chain:9.1f} sweeps/s)   forward {t_fwd * 1e3:8.3f} ms")
    if len(rows) == 2:
        py, cy = rows["python"], rows["cython"]
        print(f"cython speedup over python: chain x{py[0] / cy[0]:.1f}, forward x{py[1] / cy[1]:.2f}")
        print("identical final draw:", bool(np.array_equal(py[2], cy[2])))
    else:
        print("only one backend available:", backends)


if __name__ == "__main__":
    main()
