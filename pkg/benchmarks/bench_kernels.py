"""Compare the compiled and pure-Python kernels on representative workloads.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import math
import time

import numpy as np

from etcabs import _pykernels

try:
    from etcabs import _kernels
except ImportError:  # extension not built
    _kernels = None

A = np.array([[0.0, 1.0], [-2.0, 3.0]])
M = np.array([[1.05, 0.2], [0.2, 2.4]])


def interval_case(mod):
    x = np.array([1.0, 0.0])
    c = np.array([0.0, -0.23606922])
    e = np.array([0.0, 0.0316])
    return mod.integrate_interval(A, c, e, 1, 2 * math.pi, 0.3, M, 0.5, x, 1e-4, 1e-6, 8.0)


def cone_case(mod, rng):
    R = np.linalg.qr(rng.standard_normal((4, 4)))[0]
    S = R @ np.diag(rng.uniform(-3, 1, 4)) @ R.T
    S[2:, 2:] -= 2 * np.eye(2)
    th = rng.uniform(0, 2 * math.pi)
    na = np.array([-math.sin(th), math.cos(th)])
    nb = np.array([math.sin(th + 0.3), -math.cos(th + 0.3)])
    Q = np.outer(na, nb) + np.outer(nb, na)
    return mod.cone_min_lmax(0.5 * (S + S.T), Q, 1e-9)


def bench(fn, repeat):
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ns = ap.parse_args()
    mods = [("python", _pykernels)] + ([("compiled", _kernels)] if _kernels else [])
    rows = []
    for name, mod in mods:
        t_int = bench(lambda: interval_case(mod), ns.repeat)
        t_cone = bench(lambda: [cone_case(mod, np.random.default_rng(i)) for i in range(200)],
                       ns.repeat)
        rows.append((name, t_int, t_cone))
    print(f"{'backend':<10}{'interval [s]':>14}{'200 cone searches [s]':>24}")
    for name, t_int, t_cone in rows:
        print(f"{name:<10}{t_int:>14.4f}{t_cone:>24.4f}")
    if len(rows) == 2:
        print(f"speed-up: interval x{rows[0][1] / rows[1][1]:.1f}, "
              f"cone x{rows[0][2] / rows[1][2]:.1f}")
        r_py, r_c = interval_case(_pykernels), interval_case(_kernels)
        print(f"interval parity: |dtau| = {abs(r_py[0] - r_c[0]):.2e}, "
              f"|dx| = {np.abs(r_py[1] - r_c[1]).max():.2e}")


if __name__ == "__main__":
    main()
