"""Compare the compiled and numpy kernels on representative workloads.

Run ``python benchmarks/bench_core.py [--repeat N]``. Both backends are
checked for agreement before timing.
"""

import argparse
import time

import numpy as np

from kinetic_spaces import _core_py

try:
    from kinetic_spaces import _core
except ImportError:
    _core = None


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def workloads(seed=0):
    rng = np.random.default_rng(seed)
    shape = np.array([41, 41, 41])
    values = rng.standard_normal(shape.prod())
    lo, step = np.zeros(3), np.full(3, 0.05)
    pts = rng.uniform(-0.1, 2.1, (200_000, 3))
    a, b = rng.standard_normal(2_000_000), rng.standard_normal(2_000_000)
    w = rng.uniform(0, 1, 2_000_000)
    return {
        "interp_multilinear 41^3, 2e5 pts": lambda m: m.interp_multilinear(values, shape, lo, step, pts),
        "weighted_pow_diff 2e6, p=1.5": lambda m: m.weighted_pow_diff(a, b, w, 1.5),
        "weighted_pow_diff 2e6, p=2": lambda m: m.weighted_pow_diff(a, b, w, 2.0),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _core is None:
        print("compiled extension not built; only the numpy backend is available")
    print(f"{'workload':36s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speedup':>8s}")
    for name, job in workloads().items():
        ref = job(_core_py)
        tp = _time(lambda: job(_core_py), args.repeat)
        if _core is None:
            print(f"{name:36s} {tp * 1e3:12.2f} {'-':>12s} {'-':>8s}")
            continue
        got = job(_core)
        if not np.allclose(got, ref, rtol=1e-12, atol=1e-12):
            raise SystemExit(f"backends disagree on {name}")
        tc = _time(lambda: job(_core), args.repeat)
        print(f"{name:36s} {tp * 1e3:12.2f} {tc * 1e3:12.2f} {tp / tc:8.2f}")


if __name__ == "__main__":
    main()
