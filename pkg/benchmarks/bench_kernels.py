"""Wall-clock comparison of the numba and numpy kernel paths.

    python benchmarks/bench_kernels.py [--repeat 5]

Both paths are called directly, so DVSOPT_DISABLE_NUMBA does not matter
here.  The first numba call (compilation, or loading the on-disk cache) is
timed separately and excluded from the steady-state figures.
"""
import argparse
import time

import numpy as np

from dvsopt import _kernels
from dvsopt.network import GridModel
from dvsopt.robustness import UncertaintyBand, case_rng

CASE_C = (0.08, 0.089443, 0.044721, 1.0, 1.5, 0.0924, 0.0)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_lattice(delta, repeat):
    args = CASE_C + (delta,)
    t0 = time.perf_counter()
    _kernels._lattice_search_numba(*args)
    warm = time.perf_counter() - t0
    t_nb, r_nb = best_of(lambda: _kernels._lattice_search_numba(*args), repeat)
    t_np, r_np = best_of(lambda: _kernels._lattice_search_numpy(*args), repeat)
    same = tuple(r_nb) == tuple(r_np)
    return f"lattice  delta={delta:<6g} points={r_nb[3]:>9d}", warm, t_nb, t_np, same


def bench_s3(trials, repeat):
    g = GridModel.from_scr(0.1, 2.0, 2.0)
    alpha, beta = UncertaintyBand.symmetric(0.1).sample(case_rng(0, 0), trials)
    args = (g.vg, g.r, g.x, 1.0, 1.5, 0.05, (1 + alpha) * g.r, (1 + beta) * g.x, _kernels.LAW_POWER)
    t0 = time.perf_counter()
    _kernels._s3_trials_numba(*args)
    warm = time.perf_counter() - t0
    t_nb, r_nb = best_of(lambda: _kernels._s3_trials_numba(*args), repeat)
    t_np, r_np = best_of(lambda: _kernels._s3_trials_numpy(*args), repeat)
    same = all(np.array_equal(a, b, equal_nan=True) for a, b in zip(r_nb, r_np))
    return f"s3 trials n={trials:<9d}", warm, t_nb, t_np, same


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    a = ap.parse_args()
    rows = [
        bench_lattice(0.005, a.repeat),
        bench_lattice(0.001, a.repeat),
        bench_s3(200, a.repeat),
        bench_s3(200_000, a.repeat),
    ]
    print(f"{'kernel':<40}{'first call':>12}{'numba':>12}{'numpy':>12}{'speedup':>9}  identical")
    for name, warm, t_nb, t_np, same in rows:
        print(f"{name:<40}{warm:>11.4f}s{t_nb:>11.5f}s{t_np:>11.5f}s{t_np / t_nb:>8.1f}x  {same}")


if __name__ == "__main__":
    main()
