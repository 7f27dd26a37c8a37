"""Compiled vs numpy kinetic kernels.

Usage: python3 benchmarks/bench_kinetic.py [--repeat N] [--json PATH]

Times the fused two-velocity IMEX loop, the generic upwind transport and
the layered relaxation substeps on both backends, checks that they agree
and prints the speedup.
"""
import argparse
import json
import time

import numpy as np

from apsim import kinetic as kin


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def cases():
    for nx, steps in ((200, 500), (2000, 500)):
        st = kin.initial_state(nx, 1e-4, kind="perturbed")
        lam, a = 0.9, 0.9 / nx / 1e-4
        yield (f"gt_run nx={nx} steps={steps}",
               lambda k, f=st.f, lam=lam, a=a, n=steps: k.gt_run(f, lam, a, n, 0)[0])
    g = kin.initial_state(2000, 1e-4, "gh8", kind="perturbed")
    yield ("upwind gh8 nx=2000",
           lambda k, f=g.f, v=g.velocities.v: k.upwind_transport(f, v, 0.2))
    st = kin.initial_state(200, 1e-7, kind="perturbed")
    m = kin.maxwellian(st)
    yield ("relax_substeps nx=200 N=20000",
           lambda k, f=st.f, m=m: k.relax_substeps(f, m, 2.25, 20000))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--json", default=None)
    args = p.parse_args(argv)
    try:
        comp = kin.kernels("compiled")
    except ImportError:
        print("compiled kernels are not built; nothing to compare")
        return 1
    py = kin.kernels("python")
    rows = []
    print(f"{'case':36s} {'compiled [s]':>13s} {'numpy [s]':>11s} {'speedup':>8s} {'max diff':>9s}")
    for name, fn in cases():
        tc, oc = _best(lambda: fn(comp), args.repeat)
        tp, op = _best(lambda: fn(py), args.repeat)
        diff = float(np.abs(np.asarray(oc) - np.asarray(op)).max())
        rows.append({"case": name, "compiled": tc, "numpy": tp, "speedup": tp / tc, "max_diff": diff})
        print(f"{name:36s} {tc:13.4g} {tp:11.4g} {tp / tc:8.1f} {diff:9.1e}")
    if args.json:
        with open(args.json, "w") as f:
            json.dump(rows, f, indent=2)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
