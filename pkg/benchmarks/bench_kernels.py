"""Benchmark the numba kernels against their pure-Python/numpy fallbacks.

Run: python benchmarks/bench_kernels.py
The jitted path is what `import citegauge` uses unless CITEGAUGE_NO_NUMBA=1.
"""

import time

import numpy as np

from citegauge import kernels


def timeit(fn, *args, repeat=5):
    fn(*args)  # warm-up (and jit compile)
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def bench_lcs():
    rng = np.random.default_rng(0)
    rows = []
    for n in (64, 256, 1024):
        a = rng.integers(0, 50, size=n).astype(np.int64)
        b = rng.integers(0, 50, size=n).astype(np.int64)
        jit_t = timeit(kernels.lcs_length, a, b)
        py_t = timeit(kernels._lcs_length_py, a, b)
        rows.append(("lcs_length", f"{n}x{n}", jit_t, py_t))
    return rows


def bench_alignment():
    # alignment_mean is numpy-only by measurement: a numba quadruple loop
    # ran 2-5x slower than the vectorized gather, so only one path exists
    rng = np.random.default_rng(1)
    rows = []
    for shape in ((12, 12, 128, 512), (24, 16, 128, 1024)):
        raw = rng.random(shape) + 0.01
        weights = (raw / raw.sum(axis=3, keepdims=True)).astype(np.float32)
        cited = np.unique(rng.integers(0, shape[3], size=shape[3] // 4)).astype(np.int64)
        rows.append(("alignment_mean", "x".join(map(str, shape)),
                     timeit(kernels.alignment_mean, weights, cited)))
    return rows


def main():
    if not kernels.USE_NUMBA:
        print("numba disabled (CITEGAUGE_NO_NUMBA=1); nothing to compare")
        return
    print(f"{'kernel':<16} {'size':<20} {'numba (s)':>12} {'fallback (s)':>14} {'speedup':>9}")
    for name, size, jit_t, py_t in bench_lcs():
        print(f"{name:<16} {size:<20} {jit_t:>12.6f} {py_t:>14.6f} {py_t / jit_t:>8.1f}x")
    for name, size, np_t in bench_alignment():
        print(f"{name:<16} {size:<20} {'(numpy)':>12} {np_t:>14.6f} {'':>9}")


if __name__ == "__main__":
    main()
