"""Time the numba kernels against their numpy/python fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each pair is first checked for identical output, then timed (best of
``--repeat`` runs, after one warm-up call so JIT compilation is excluded).
"""

import argparse
import time

import numpy as np

from splitgauge import _accel

KEY = 0x5EED_0000_1234_ABCD


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def shuffled(kernel, n, draws):
    arr = np.arange(n, dtype=np.int64)
    kernel(arr, draws)
    return arr


def cases():
    rng = np.random.default_rng(0)
    n = 200_000
    bounds = np.arange(n, 1, -1, dtype=np.uint64)
    draws = _accel.bounded_draws_py(KEY, 0, bounds)
    partial = (rng.random(n // 4) * np.arange(n, n - n // 4, -1)).astype(np.int64)
    images = rng.integers(0, 256, size=(2000, 32, 32, 3), dtype=np.uint8)
    return [
        ("splitmix_block 2M words",
         lambda: _accel.splitmix_block_py(KEY, 0, 2_000_000),
         lambda: _accel.splitmix_block_nb(np.uint64(KEY), np.uint64(0), 2_000_000)),
        ("bounded_draws 200k",
         lambda: _accel.bounded_draws_py(KEY, 0, bounds),
         lambda: _accel.bounded_draws_nb(np.uint64(KEY), np.uint64(0), bounds)),
        ("shuffle_swaps 200k",
         lambda: shuffled(_accel.shuffle_swaps_py, n, draws),
         lambda: shuffled(_accel.shuffle_swaps_nb, n, draws)),
        ("partial_swaps 50k of 200k",
         lambda: _accel.partial_swaps_py(n, partial),
         lambda: _accel.partial_swaps_nb(n, partial)),
        ("patch_sums 2000x32x32x3",
         lambda: _accel.patch_sums_py(images, 8, 8),
         lambda: _accel.patch_sums_nb(images, 8, 8)),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _accel.splitmix_block_nb is None:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'kernel':<28} {'numpy/python':>14} {'numba':>10} {'speedup':>8}")
    for name, py, nb in cases():
        a, b = py(), nb()
        if not np.array_equal(a, b):
            raise SystemExit(f"{name}: outputs differ")
        tp, tn = best_of(py, args.repeat), best_of(nb, args.repeat)
        print(f"{name:<28} {tp * 1e3:>12.1f}ms {tn * 1e3:>8.1f}ms {tp / tn:>7.1f}x")


if __name__ == "__main__":
    main()
