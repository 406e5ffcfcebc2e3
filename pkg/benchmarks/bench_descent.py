"""End-to-end descent timing under both kernel backends.

Runs the full alternating loop on a few instance sizes and reports the
per-step time for the active backend next to the numpy fallback.  The
backend is fixed at import time, so the fallback half runs in a child
process with OVERCP_FORCE_NUMPY=1.

    python benchmarks/bench_descent.py [--repeat 3]
"""
import argparse
import json
import os
import subprocess
import sys
import time

CASES = [
    # (d, l, r, m, H) with K = 2
    (8, 3, 2, 16, 400),
    (12, 3, 3, 24, 300),
    (16, 3, 4, 48, 150),
]


def measure(repeat):
    from overcp import descent, kernels, model

    rows = []
    for d, l, r, m, H in CASES:
        hyper = model.desk_hyperparams(d, l, r, m, 0.05, seed=3, H=H, K=2)
        gt = model.generate_ground_truth(d, r, l, seed=99)
        params = descent.init_params(hyper, seed=3)
        descent.run(hyper, gt, params0=params)  # warm up
        best = float("inf")
        for _ in range(repeat):
            t0 = time.perf_counter()
            descent.run(hyper, gt, params0=params)
            best = min(best, time.perf_counter() - t0)
        rows.append([d, l, m, best / (hyper.K * hyper.H)])
    return kernels.BACKEND, rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--as-child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()

    backend, rows = measure(args.repeat)
    if args.as_child:
        json.dump(rows, sys.stdout)
        return
    if backend != "compiled":
        print("note: compiled backend unavailable; timing numpy against itself")

    env = dict(os.environ, OVERCP_FORCE_NUMPY="1")
    out = subprocess.run(
        [sys.executable, __file__, "--repeat", str(args.repeat), "--as-child"],
        env=env, capture_output=True, text=True, check=True,
    )
    fallback_rows = json.loads(out.stdout)

    print(f"active backend: {backend}")
    header = f"{'d':>4}{'l':>3}{'m':>4}{'per step (' + backend + ')':>22}{'per step (numpy)':>20}"
    print(header)
    print("-" * len(header))
    for (d, l, m, t_active), (_, _, _, t_plain) in zip(rows, fallback_rows):
        print(f"{d:>4}{l:>3}{m:>4}{t_active * 1e6:>20.0f}us{t_plain * 1e6:>18.0f}us")


if __name__ == "__main__":
    main()
