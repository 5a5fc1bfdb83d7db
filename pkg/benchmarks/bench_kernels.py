"""Benchmark the two conv2d backends (numba JIT vs pure-numpy im2col).

Usage:
    python3 benchmarks/bench_kernels.py [--repeats N]

Selecting the numpy backend for a normal run is done via the environment:
    SDMKIT_DISABLE_NUMBA=1 python3 ...
This script times both implementations directly in one process.
"""

import argparse
import time

import numpy as np

from sdmkit import kernels

CASES = [
    # (label, n, c, h, w, filters, k, stride) — sized like the shipped encoders
    ("encoder-small", 64, 4, 32, 32, 8, 3, 2),
    ("encoder-wide", 64, 8, 32, 32, 16, 3, 2),
    ("deep-layer", 64, 16, 16, 16, 16, 3, 2),
]


def time_fn(fn, args, repeats):
    fn(*args)  # warm-up (also triggers JIT compilation for numba)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if not kernels.HAS_NUMBA:
        print("numba backend unavailable (disabled or not installed); "
              "timing numpy only")

    header = f"{'case':<16}{'direction':<10}{'numpy (ms)':>12}{'numba (ms)':>12}{'speedup':>9}"
    print(header)
    print("-" * len(header))
    rng = np.random.default_rng(0)
    for label, n, c, h, w, f, k, stride in CASES:
        x = rng.normal(size=(n, c, h, w))
        wgt = rng.normal(size=(f, c, k, k))
        b = rng.normal(size=f)
        out = kernels.conv2d_forward_numpy(x, wgt, b, stride)
        dout = rng.normal(size=out.shape)

        t_np_f = time_fn(kernels.conv2d_forward_numpy, (x, wgt, b, stride), args.repeats)
        t_np_b = time_fn(kernels.conv2d_backward_numpy, (x, wgt, dout, stride), args.repeats)
        rows = [("forward", t_np_f, None), ("backward", t_np_b, None)]
        if kernels.HAS_NUMBA:
            t_nb_f = time_fn(kernels._conv2d_forward_njit, (x, wgt, b, stride), args.repeats)
            t_nb_b = time_fn(kernels._conv2d_backward_njit, (x, wgt, dout, stride), args.repeats)
            rows = [("forward", t_np_f, t_nb_f), ("backward", t_np_b, t_nb_b)]
            np.testing.assert_allclose(
                kernels._conv2d_forward_njit(x, wgt, b, stride), out, atol=1e-10
            )
        for direction, t_np, t_nb in rows:
            nb_txt = f"{t_nb * 1e3:>12.3f}" if t_nb is not None else f"{'-':>12}"
            speed = f"{t_np / t_nb:>8.2f}x" if t_nb else f"{'-':>9}"
            print(f"{label:<16}{direction:<10}{t_np * 1e3:>12.3f}{nb_txt}{speed}")


if __name__ == "__main__":
    main()
