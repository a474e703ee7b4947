"""Compiled vs pure-Python kernel throughput.

    python benchmarks/bench_kernels.py [--scale 1.0] [--repeat 3]

Both backends run the same workloads from the same seeds (their outputs are
bit-identical), so the ratio of wall times is the speed-up of the extension.
The workloads are sized so the Python side finishes in a few seconds.
"""

import argparse
import math
import time

import numpy as np

from fvspine import _backend
from fvspine.montecarlo import RngSeed

PI = math.pi


def workloads(scale: float):
    eps = np.array([0.05, 0.1, 0.2])
    n_race = max(1, int(2000 * scale))
    horizon = 200.0 * scale
    return {
        f"race x{n_race} (dt=1e-4)":
            lambda k, g: k.race(PI / 4, PI / 4, 0.0, PI, 0.0, PI, 1e-4, 5e-4, n_race, g),
        f"fv_run {horizon:g} time units":
            lambda k, g: k.fv_run(PI / 2, PI / 2, horizon, 1e-4, g, eps, 40, 0.0, 0, 100_000),
        f"cond_run {horizon / 40:g} time units":
            lambda k, g: k.cond_run(PI / 2, horizon / 40, 1e-4, g, eps, 1, 0, True, 0.0),
        f"quarter_exit x{n_race}":
            lambda k, g: k.quarter_exit(0.5, 0.5, PI, 1e-4, n_race, g),
    }


def best_time(fn, kernels, repeat):
    best = math.inf
    for r in range(repeat):
        gen = RngSeed(2024, r).generator()
        t0 = time.perf_counter()
        fn(kernels, gen)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scale", type=float, default=1.0, help="workload multiplier")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    compiled = _backend.compiled_kernels
    if compiled is None:
        print("compiled extension not built; only the Python backend is available")
    print(f"{'workload':34s} {'python [s]':>11s} {'cython [s]':>11s} {'speed-up':>9s}")
    for name, fn in workloads(args.scale).items():
        tp = best_time(fn, _backend.python_kernels, args.repeat)
        if compiled is None:
            print(f"{name:34s} {tp:11.3f} {'-':>11s} {'-':>9s}")
            continue
        tc = best_time(fn, compiled, args.repeat)
        print(f"{name:34s} {tp:11.3f} {tc:11.4f} {tp / tc:8.0f}x")


if __name__ == "__main__":
    main()
