"""Benchmark the compiled kernels against the pure-Python fallback.

Run with:  python3 benchmarks/bench_kernels.py [--sizes 1000,10000,100000]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from hetcurve._core import _purepy

try:
    from hetcurve._core import _kernels
except ImportError:
    _kernels = None


def _time(fn, *args, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_pava(backend, n, rng):
    y = rng.normal(size=n) + 0.5 * np.arange(n) / n
    w = rng.uniform(0.5, 2.0, n)
    return _time(backend.pava_nondecreasing, y, w)


def bench_hull(backend, n, rng):
    x = np.sort(rng.uniform(-1, 1, n))
    x = np.unique(x)
    y = rng.normal(size=len(x))
    return _time(backend.lower_hull_indices, x, y)


def bench_enet(backend, n, rng):
    p = 20
    X = np.ascontiguousarray(rng.normal(size=(n, p)))
    z = np.ascontiguousarray(rng.normal(size=n))
    v = np.full(n, 1.0 / n)
    l1 = np.full(p, 0.01)
    l2 = np.full(p, 0.01)

    def run():
        beta = np.zeros(p)
        backend.enet_coordinate_descent(X, z, v, l1, l2, beta, 200, 1e-12)

    return _time(run)


BENCHES = [("pava", bench_pava), ("lower_hull", bench_hull), ("enet_cd", bench_enet)]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="1000,10000,100000",
                        help="comma-separated problem sizes")
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]
    rng = np.random.default_rng(0)

    if _kernels is None:
        print("compiled extension not available; benchmarking pure Python only")

    header = f"{'kernel':<12}{'n':>9}{'python (ms)':>14}{'compiled (ms)':>15}{'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name, bench in BENCHES:
        for n in sizes:
            t_py = bench(_purepy, n, rng) * 1e3
            if _kernels is not None:
                t_c = bench(_kernels, n, rng) * 1e3
                print(f"{name:<12}{n:>9}{t_py:>14.3f}{t_c:>15.3f}{t_py / t_c:>8.1f}x")
            else:
                print(f"{name:<12}{n:>9}{t_py:>14.3f}{'-':>15}{'-':>9}")


if __name__ == "__main__":
    main()
