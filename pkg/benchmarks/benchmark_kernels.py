#!/usr/bin/env python3
"""Benchmark the compiled oscillator-bank kernels against the numpy fallback.

Usage:
    python benchmarks/benchmark_kernels.py
    python benchmarks/benchmark_kernels.py --sizes 1024 8192 44100 --repeats 5
    python benchmarks/benchmark_kernels.py --output results.json
"""

import argparse
import json
import time

import numpy as np

from audiosds import _kernels
from audiosds.render.base import logit


def make_inputs(V, T, seed=0):
    rng = np.random.default_rng(seed)
    A = np.exp(-2.0 + 0.5 * rng.standard_normal((V + 1, V)))
    omega = 2 * np.pi * rng.uniform(50, 2000, V)
    attack = 1 / (1 + np.exp(-rng.normal(logit(0.05), 0.3, V)))
    decay = 1 / (1 + np.exp(-rng.normal(logit(0.4), 0.3, V)))
    return A, omega, attack, decay


def time_call(fn, *args, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", type=int, nargs="+",
                        default=[1024, 8192, 44100, 132300])
    parser.add_argument("--oscillators", type=int, default=4)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--output", help="write results as JSON")
    args = parser.parse_args()

    if _kernels.KERNEL_BACKEND != "numba":
        print("warning: numba kernels unavailable; comparing numpy against itself")
    fwd_py, bwd_py = _kernels.pure_numpy_kernels()
    sr = 44100.0
    V = args.oscillators

    # compile outside the timed region
    warm = make_inputs(V, 64)
    _kernels.fm_forward(*warm, 64, sr)

    results = []
    print(f"active backend: {_kernels.KERNEL_BACKEND}")
    print(f"{'T':>8} {'fwd numba':>12} {'fwd numpy':>12} {'speedup':>8}   "
          f"{'bwd numba':>12} {'bwd numpy':>12} {'speedup':>8}")
    for T in args.sizes:
        A, omega, attack, decay = make_inputs(V, T)
        t_fwd = time_call(_kernels.fm_forward, A, omega, attack, decay, T, sr,
                          repeats=args.repeats)
        t_fwd_py = time_call(fwd_py, A, omega, attack, decay, T, sr,
                             repeats=args.repeats)
        u, phase, env, x = _kernels.fm_forward(A, omega, attack, decay, T, sr)
        xbar = np.random.default_rng(0).standard_normal(T)
        t_bwd = time_call(_kernels.fm_backward, A, omega, attack, decay, u, phase,
                          env, xbar, sr, repeats=args.repeats)
        t_bwd_py = time_call(bwd_py, A, omega, attack, decay, u, phase, env, xbar,
                             sr, repeats=args.repeats)
        row = {
            "T": T, "forward_active_s": t_fwd, "forward_numpy_s": t_fwd_py,
            "backward_active_s": t_bwd, "backward_numpy_s": t_bwd_py,
        }
        results.append(row)
        print(f"{T:>8} {t_fwd:>12.5f} {t_fwd_py:>12.5f} {t_fwd_py / t_fwd:>7.1f}x   "
              f"{t_bwd:>12.5f} {t_bwd_py:>12.5f} {t_bwd_py / t_bwd:>7.1f}x")

    if args.output:
        with open(args.output, "w") as fh:
            json.dump({"backend": _kernels.KERNEL_BACKEND, "results": results}, fh,
                      indent=2)
        print(f"wrote {args.output}")


if __name__ == "__main__":
    main()
