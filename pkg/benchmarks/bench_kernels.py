"""Time the numba and numpy variants of every hot kernel.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--n 5000]

The first numba call per signature compiles (or loads from cache) and is
excluded from the timings. ``--end-to-end`` also times a full backtest
in two subprocesses, one with ``SIZEBENCH_DISABLE_JIT=1``.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from sizebench import _kernels as K
from sizebench._jit import HAVE_NUMBA


def cases(n, rng):
    y = rng.normal(0, 0.01, n)
    Z = np.column_stack([np.ones(n), rng.normal(0, 0.01, n)])
    eye = np.eye(2)
    kal = (y, Z, 0.0, eye, np.zeros(2), 1e-4, np.diag([0.0, 1e-4]), np.zeros(2), 1e6 * eye, 1e-12)
    dur = np.tile(np.arange(1.0, 21.0), n // 20 + 1)[:n]
    ev = (rng.random(n) < 0.05).astype(float)
    hz = (np.log(dur), rng.uniform(0.01, 0.05, n), ev, 1.0 - ev, 0.05, 0.9, 1.5)
    price = 100 * np.exp(np.cumsum(rng.normal(0, 0.01, n)))
    hi, lo = price * 1.01, price * 0.99
    hits = (rng.random(n) < 0.05).astype(np.int64)
    return {
        "kalman_filter": (K.kalman_filter_jit, K.kalman_filter_np, kal),
        "duration_loglik": (K.duration_loglik_jit, K.duration_loglik_np, hz),
        "seeded_ema": (K.seeded_ema_jit, K.seeded_ema_np, (price, 20, 2.0 / 21.0)),
        "parabolic_sar": (K.parabolic_sar_jit, K.parabolic_sar_np, (hi, lo, price, 0.02, 0.02, 0.2)),
        "markov_counts": (K.markov_counts_jit, K.markov_counts_np, (hits, 3)),
    }


def end_to_end(repeat):
    code = ("import time,sizebench.cli as c;t=time.perf_counter();"
            "c.main(['backtest','--config','configs/hedge10_10.json','--out','/tmp/sizebench_bench']);"
            "print(time.perf_counter()-t)")
    for flag in ("0", "1"):
        env = dict(os.environ, SIZEBENCH_DISABLE_JIT=flag, SIZEBENCH_LOG="error")
        times = [float(subprocess.run([sys.executable, "-c", code], env=env, check=True,
                                      capture_output=True, text=True).stdout.split()[-1])
                 for _ in range(repeat)]
        label = "numpy" if flag == "1" else "numba"
        print(f"backtest end-to-end [{label}]: best {min(times):.3f} s")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba not installed; the jit column times the plain-Python loops")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<18}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    for name, (fj, fn, a) in cases(args.n, rng).items():
        fj(*a)  # compile / load cache
        number = 3
        tj = min(timeit.repeat(lambda: fj(*a), number=number, repeat=args.repeat)) / number
        tn = min(timeit.repeat(lambda: fn(*a), number=number, repeat=args.repeat)) / number
        print(f"{name:<18}{tj * 1e3:>12.3f}{tn * 1e3:>12.3f}{tn / tj:>9.1f}x")
    if args.end_to_end:
        end_to_end(min(args.repeat, 3))


if __name__ == "__main__":
    main()
