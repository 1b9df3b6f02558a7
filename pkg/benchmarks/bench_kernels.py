#!/usr/bin/env python3
"""Benchmark the numba-jitted kernels against their pure-numpy fallbacks.

Usage: python3 benchmarks/bench_kernels.py [--repeat 5]
Run with AMRTK_NO_NUMBA=1 to confirm the numpy path is the one the package
would select; this script always times both implementations directly.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from amrtk import _kernels


def best_of(fn, args, repeat):
    timings = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        timings.append(time.perf_counter() - t0)
    return min(timings)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    cases = []

    x = rng.normal(size=2_000_000)
    cases.append(("frame_rms (2M samples, 800-sample frames)",
                  _kernels._frame_rms_np, None, (x, 800)))

    bits = (rng.random(1_000_000) < 0.4).astype(np.uint8)
    cases.append(("median_binary (1M bits, m=31)",
                  _kernels._median_binary_np, None, (bits, 31)))

    k, n = 256, 64
    pred = np.column_stack([rng.uniform(0, 1, k), rng.uniform(0, 1, k)])
    conf = rng.uniform(0, 1, k)
    gt = np.column_stack([rng.uniform(0.2, 0.8, n), rng.uniform(0.1, 0.4, n)])
    cases.append((f"matching_cost ({n}x{k}, x500 calls)",
                  _kernels._matching_cost_np, None, (pred, conf, gt, 10.0, 1.0)))

    if _kernels.NUMBA_ENABLED:
        jitted = {
            "frame_rms": _kernels._frame_rms_jit,
            "median_binary": _kernels._median_binary_jit,
            "matching_cost": _kernels._matching_cost_jit,
        }
    else:
        jitted = {}
        print("numba backend unavailable or disabled; timing numpy path only\n")

    print(f"active backend: {_kernels.backend()}")
    print(f"{'kernel':<45} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for name, np_fn, _, call_args in cases:
        key = name.split(" ")[0]
        jit_fn = jitted.get(key)
        repeat_calls = 500 if key == "matching_cost" else 1

        def run(fn):
            for _ in range(repeat_calls):
                out = fn(*call_args)
            return out

        t_np = best_of(run, (np_fn,), args.repeat)
        if jit_fn is not None:
            run(jit_fn)  # compile before timing
            t_jit = best_of(run, (jit_fn,), args.repeat)
            out_np, out_jit = run(np_fn), run(jit_fn)
            assert np.allclose(out_np, out_jit, rtol=1e-10, atol=1e-12)
            print(f"{name:<45} {t_np * 1e3:>8.2f}ms {t_jit * 1e3:>8.2f}ms {t_np / t_jit:>7.2f}x")
        else:
            print(f"{name:<45} {t_np * 1e3:>8.2f}ms {'-':>10} {'-':>8}")


if __name__ == "__main__":
    main()
