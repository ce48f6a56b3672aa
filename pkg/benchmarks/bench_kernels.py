"""Compiled vs plain-Python timings for the two hot kernels.

    python3 benchmarks/bench_kernels.py [--steps 2000] [--repeat 5]

The frame sweep is timed on the FitzHugh-Nagumo Hamiltonian system (n = 2)
and the tridiagonal solve on the evolution-sized systems. The plain versions
are the ``py_func`` of each kernel, so the numbers compare the same code.
With SKEWPULSE_NO_NUMBA set both columns run uncompiled.
"""

import argparse
import time

import numpy as np

from skewpulse import _accel, kernels
from skewpulse.model import build_fhn
from skewpulse.symplectic import random_lagrangian


def best_of(fn, repeat):
    fn()  # warm-up (and compile)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def sweep_case(steps):
    model = build_fhn(1.0, 3.0, 6.0, 0.1)
    rng = np.random.default_rng(0)
    x = np.linspace(-10, 10, steps)
    w = np.column_stack([np.exp(-x**2), 0.1 * np.exp(-x**2)])
    b = model.hess_v(w)
    z0 = random_lagrangian(2, rng).columns
    hs = np.full(steps, 20.0 / steps)
    args = (z0, b, b, hs, 0.2, 0.0, 1.0 / (model.q * model.d), model.q * model.m, False)
    return args


def thomas_case(size, ncol=2):
    rng = np.random.default_rng(1)
    lower, upper = rng.uniform(-1, 1, (2, size))
    diag = 3.0 + rng.uniform(0, 1, size)
    rhs = rng.standard_normal((size, ncol))
    return lower, diag, upper, rhs


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    print(f"numba enabled: {_accel.USE_NUMBA}")
    print(f"{'kernel':32s} {'compiled [s]':>14s} {'python [s]':>12s} {'speed-up':>9s}")
    rows = []
    sweep = sweep_case(args.steps)
    rows.append((f"frame_sweep ({args.steps} steps)", kernels.frame_sweep, kernels.frame_sweep.py_func, sweep))
    for size in (2_000, 20_000):
        case = thomas_case(size)
        rows.append((f"thomas ({size} rows)", kernels._thomas_numba, kernels._thomas_numba.py_func, case))
    for name, fast, slow, case in rows:
        tf = best_of(lambda: fast(*case), args.repeat)
        ts = best_of(lambda: slow(*case), max(1, args.repeat // 2))
        print(f"{name:32s} {tf:14.4g} {ts:12.4g} {ts / tf:9.1f}")

    # the scipy path used when numba is off
    lower, diag, upper, rhs = thomas_case(20_000)
    from scipy.linalg import solve_banded

    ab = np.zeros((3, diag.size))
    ab[0, 1:], ab[1], ab[2, :-1] = upper[:-1], diag, lower[1:]
    tb = best_of(lambda: solve_banded((1, 1), ab, rhs), args.repeat)
    print(f"{'solve_banded (20000 rows)':32s} {tb:14.4g}")


if __name__ == "__main__":
    main()
