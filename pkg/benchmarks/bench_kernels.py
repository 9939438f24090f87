"""Compiled versus pure-Python kernels on the two hot loops: exit-map orbits and transport characteristics.

    python benchmarks/bench_kernels.py [--orbits 200] [--nodes 100]
"""
import argparse
import time

import numpy as np

from symplug import _pykernels, kernels
from symplug.moser_solver import build_shrinking_family
from symplug.smooth_fields import build_plug_profile


def timed(fn, repeat=3):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--orbits", type=int, default=200)
    ap.add_argument("--nodes", type=int, default=100)
    args = ap.parse_args(argv)

    prof = build_plug_profile()
    vec = prof.vector
    rng = np.random.default_rng(0)
    th = rng.uniform(0, 2 * np.pi, args.orbits)
    xs = rng.uniform(-prof.delta, prof.delta, args.orbits)
    t0 = np.full(args.orbits, -prof.t_half)
    budget = 200.0 * prof.t_half
    fam = build_shrinking_family(prof, 0.01)
    fv = fam.vector(1.0)
    gx = rng.uniform(-0.4, 0.4, args.nodes)
    gt = rng.uniform(-0.8, 0.8, args.nodes)

    rows = []
    impls = [("python", _pykernels)]
    if kernels.CYTHON_AVAILABLE:
        impls.insert(0, ("cython", kernels._impl))
    results = {}
    for name, impl in impls:
        t_orb, orb = timed(lambda: impl.orbit_batch(vec, th, xs, t0, 1.0, budget, 1e-10, 1e-10), repeat=1 if name == "python" else 3)
        t_tr, tr = timed(lambda: impl.transport(fv, gx, gt, fam.gamma_offset, 1e-7, 1e-12, 1e-12, 1e4), repeat=1 if name == "python" else 3)
        results[name] = (orb, tr)
        rows.append((name, t_orb, t_tr))
    print(f"{'backend':<8} {'orbits [s]':>12} {'transport [s]':>14}")
    for name, a, b in rows:
        print(f"{name:<8} {a:12.4f} {b:14.4f}")
    if len(rows) == 2:
        print(f"speed-up  {rows[1][1] / rows[0][1]:11.1f}x {rows[1][2] / rows[0][2]:13.1f}x")
        (oc, tc), (op, tp) = results["cython"], results["python"]
        print(f"max |orbit difference|     {np.max(np.abs(oc[2] - op[2])):.2e}")
        print(f"max |transport difference| {np.max(np.abs(tc[0] - tp[0])):.2e}")


if __name__ == "__main__":
    main()
