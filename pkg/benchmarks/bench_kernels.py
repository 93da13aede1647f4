#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--sizes 1e4,1e5,1e6] [--repeat 30]

Times the three hot kernels (silu forward, silu backward, fused Adam step)
on both backends and prints a speedup table. Run after building the
extension (pip install -e . --no-build-isolation).
"""

import argparse
import time

import numpy as np

from itfkan import kernels
from itfkan.kernels import _fallback


def time_call(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench(size, repeat):
    rng = np.random.default_rng(0)
    x = rng.normal(size=size)
    g = rng.normal(size=size)
    p = rng.normal(size=size)
    m = np.zeros(size)
    v = np.zeros(size)
    rows = []

    cases = {
        "silu": (
            lambda: kernels.silu(x),
            lambda: _fallback.silu(x),
        ),
        "silu_grad": (
            lambda: kernels.silu_grad(x, g),
            lambda: _fallback.silu_grad(x, g),
        ),
        "adam_step": (
            lambda: kernels.adam_step(p, g, m, v, 1, 1e-3, 0.9, 0.999, 1e-8),
            lambda: _fallback.adam_step(p, g, m, v, 1e-3, 0.9, 0.999, 1e-8, 0.1, 1e-3),
        ),
    }
    for name, (fast, slow) in cases.items():
        t_fast = time_call(fast, repeat)
        t_slow = time_call(slow, repeat)
        rows.append((name, size, t_slow * 1e3, t_fast * 1e3, t_slow / t_fast))
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="10000,100000,1000000")
    parser.add_argument("--repeat", type=int, default=30)
    args = parser.parse_args()

    print(f"active backend: {kernels.BACKEND}")
    if not kernels.USING_COMPILED:
        print("note: compiled core unavailable; timing fallback against itself")
    header = f"{'kernel':<12}{'n':>10}{'numpy ms':>12}{'active ms':>12}{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for size_text in args.sizes.split(","):
        size = int(float(size_text))
        for name, n, slow_ms, fast_ms, speedup in bench(size, args.repeat):
            print(f"{name:<12}{n:>10}{slow_ms:>12.3f}{fast_ms:>12.3f}{speedup:>10.2f}x")


if __name__ == "__main__":
    main()
