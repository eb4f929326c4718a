#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the pure-numpy fallback.

Both backends are bit-identical; this script only compares speed on the
hot paths: pinned-order GEMM (the forward-pass workhorse), embedding-bag
pooling, and bit-flip application. Run after an editable install:

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from drsfi._kernels import fallback

try:
    from drsfi._kernels import _core
except ImportError:
    _core = None


def timeit(fn, *args, repeats=5):
    fn(*args)  # warmup
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def bench_gemm(backends):
    rng = np.random.default_rng(0)
    print("\ngemm_f32 (pinned accumulation order)")
    print(f"{'m x k x n':>18} " + "".join(f"{name:>14}" for name in backends))
    for m, k, n in [(64, 128, 512), (256, 512, 512), (64, 1024, 512), (512, 512, 512)]:
        a = rng.standard_normal((m, k)).astype(np.float32)
        b = rng.standard_normal((k, n)).astype(np.float32)
        cells = []
        for name, impl in backends.items():
            sec = timeit(impl.gemm_f32, a, b)
            gflops = 2 * m * k * n / sec / 1e9
            cells.append(f"{sec * 1e3:8.2f}ms({gflops:4.1f}G)")
        print(f"{f'{m}x{k}x{n}':>18} " + "".join(f"{c:>14}" for c in cells))


def bench_bag(backends):
    rng = np.random.default_rng(1)
    table = rng.standard_normal((8192, 256)).astype(np.float32)
    idx = rng.integers(0, 8192, size=64).astype(np.int64)
    print("\nbag_f32 (8192x256 table, 64 rows, x1000 calls)")
    for name, impl in backends.items():
        sec = timeit(lambda: [impl.bag_f32(table, idx) for _ in range(1000)])
        print(f"  {name:>8}: {sec * 1e3:8.2f} ms")


def bench_xor(backends):
    rng = np.random.default_rng(2)
    n_words, n_flips = 19_000_000, 608_000
    idx = np.sort(rng.choice(n_words, size=n_flips, replace=False)).astype(np.int64)
    masks = (np.uint32(1) << rng.integers(0, 32, size=n_flips).astype(np.uint32)).astype(np.uint32)
    print(f"\nxor_apply_u32 ({n_flips} flips over {n_words} words)")
    for name, impl in backends.items():
        words = rng.integers(0, 2**32, size=n_words, dtype=np.uint32)
        sec = timeit(impl.xor_apply_u32, words, idx, masks)
        print(f"  {name:>8}: {sec * 1e3:8.2f} ms")


def main():
    backends = {"numpy": fallback}
    if _core is not None:
        backends["cython"] = _core
    else:
        print("compiled core not available; benchmarking the fallback only")
    bench_gemm(backends)
    bench_bag(backends)
    bench_xor(backends)


if __name__ == "__main__":
    main()
