"""Time the numba kernels against their numpy/scipy counterparts.

    python benchmarks/bench_kernels.py [--n 100000] [--repeat 5]

Both variants are imported directly, so the VOLRATIO_DISABLE_NUMBA flag does
not matter here. The first numba call is a warm-up (compilation or cache load)
and is excluded from the timings.
"""
import argparse
import time

import numpy as np

from volratio import arima, kernels
from volratio._accel import HAVE_NUMBA


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(n, rng):
    x = 0.01 * rng.standard_normal(n)
    w = x.copy()
    for t in range(1, n):
        w[t] += 0.5 * w[t - 1]
    phi, theta = np.array([0.5, -0.2]), np.array([0.3])
    T, R, P0 = arima._state_space(phi, theta)
    empty = np.empty(0)
    return [
        ("rolling_std k=30", kernels.rolling_std_nb, kernels.rolling_std_np, (x, 30)),
        ("garch_filter", kernels.garch_filter_nb, kernels.garch_filter_np, (x, 1e-6, 0.05, 0.9, 1e-4)),
        ("garch_nll", kernels.garch_nll_nb, kernels.garch_nll_np, (x, 1e-6, 0.05, 0.9, 1e-4)),
        ("arma_css_residuals", kernels.arma_css_residuals_nb, kernels.arma_css_residuals_np, (w, phi, theta)),
        ("arma_kalman", kernels.arma_kalman_nb, kernels.arma_kalman_np, (w, T, R, P0, 1e-12, empty)),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        print("numba is not installed; both columns time the numpy path")
    rng = np.random.default_rng(args.seed)
    print(f"n = {args.n}, best of {args.repeat}")
    print(f"{'kernel':<22}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    for name, nb, np_fn, fargs in cases(args.n, rng):
        nb(*fargs)
        t_nb = best_of(nb, fargs, args.repeat)
        t_np = best_of(np_fn, fargs, args.repeat)
        print(f"{name:<22}{1e3 * t_nb:>12.3f}{1e3 * t_np:>12.3f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
