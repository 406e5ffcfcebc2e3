"""Compare the compiled kernel backend against the numpy fallback.

Runs the three hot kernels over a grid of problem sizes and prints a table
of per-call times plus the speedup.  The numpy path is loaded from the
fallback module directly, so one process measures both.

    python benchmarks/bench_kernels.py [--repeat 50]
"""
import argparse
import time

import numpy as np

from overcp import kernels
from overcp import _kernels_numpy as fallback

SIZES = [
    # (d, l, m)
    (8, 3, 24),
    (10, 3, 20),
    (16, 3, 48),
    (8, 4, 24),
    (12, 4, 30),
    (6, 5, 20),
]


def _time(fn, repeat):
    fn()  # warm up (and fold in any one-time allocation)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args()

    if kernels.BACKEND != "compiled":
        print("note: compiled backend unavailable; timing numpy against itself")

    rng = np.random.default_rng(0)
    print(f"active backend: {kernels.BACKEND}")
    header = f"{'kernel':<26}{'d':>4}{'l':>3}{'m':>4}{'compiled':>12}{'numpy':>12}{'speedup':>9}"
    print(header)
    print("-" * len(header))
    for d, l, m in SIZES:
        U = np.ascontiguousarray(rng.standard_normal((d, m)))
        w = rng.standard_normal(m)
        T = rng.standard_normal(d**l)
        cases = [
            ("weighted_outer_sum", lambda: kernels.weighted_outer_sum(U, w, l),
             lambda: fallback.weighted_outer_sum(U, w, l)),
            ("contract_leave_one_batch", lambda: kernels.contract_leave_one_batch(T, U, l),
             lambda: fallback.contract_leave_one_batch(T, U, l)),
            ("contract_full_batch", lambda: kernels.contract_full_batch(T, U, l),
             lambda: fallback.contract_full_batch(T, U, l)),
        ]
        for name, active, plain in cases:
            np.testing.assert_allclose(active(), plain(), rtol=1e-10, atol=1e-12)
            t_active = _time(active, args.repeat)
            t_plain = _time(plain, args.repeat)
            print(
                f"{name:<26}{d:>4}{l:>3}{m:>4}"
                f"{t_active * 1e6:>10.1f}us{t_plain * 1e6:>10.1f}us"
                f"{t_plain / t_active:>8.1f}x"
            )


if __name__ == "__main__":
    main()
