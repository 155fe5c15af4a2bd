"""Time the couple-allocation kernel: numba vs. the vectorised numpy twin.

Usage: python benchmarks/bench_kernels.py [--grid N] [--repeat R]
"""

import argparse
import time

import numpy as np

from marfert.params import SolverSettings, baseline_params
from marfert.static import build_static_tables


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--grid", type=int, default=15)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    params = baseline_params().with_values(n_wage_grid=args.grid)
    settings = SolverSettings()
    n_states = args.grid**2 * 10

    t0 = time.perf_counter()
    jit_tab = build_static_tables(params, settings, backend="numba")
    first = time.perf_counter() - t0  # includes compilation on a cold cache
    t_jit = _time(lambda: build_static_tables(params, settings, backend="numba"), args.repeat)
    t_np = _time(lambda: build_static_tables(params, settings, backend="numpy"), args.repeat)
    np_tab = build_static_tables(params, settings, backend="numpy")

    gap = max(
        float(np.nanmax(np.abs(jit_tab.couple[k] - np_tab.couple[k]))) for k in ("l_m", "l_f", "d_m", "d_f")
    )
    print(f"couple states     : {n_states}")
    print(f"numba first call  : {first:.3f} s")
    print(f"numba (warm)      : {t_jit:.4f} s")
    print(f"numpy             : {t_np:.4f} s")
    print(f"speed-up          : {t_np / t_jit:.1f}x")
    print(f"max |difference|  : {gap:.2e}")


if __name__ == "__main__":
    main()
