"""Benchmark the compiled coverage kernel against the NumPy fallback.

The kernel backend is normally chosen at import time; here we swap the
function on the kernels module directly so both run in one process.

Usage: python benchmarks/bench_raster.py [--canvas 600] [--strokes 16] [--reps 20]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

import strokeboard._kernels as kernels
from strokeboard._kernels import numpy_impl
from strokeboard.model import Rng, random_init_strokes
from strokeboard.raster import render, render_backward


def _time(fn, reps):
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--canvas", type=int, default=600)
    parser.add_argument("--strokes", type=int, default=16)
    parser.add_argument("--segments", type=int, default=5)
    parser.add_argument("--width", type=float, default=3.0)
    parser.add_argument("--reps", type=int, default=20)
    args = parser.parse_args()

    sketch = random_init_strokes(
        args.strokes, args.segments, args.canvas, args.canvas, Rng(42), width=args.width
    )
    cot = np.ones((args.canvas, args.canvas))

    backends = [("numpy", numpy_impl.coverage_entries)]
    try:
        from strokeboard._kernels import _coverage

        backends.insert(0, ("cython", _coverage.coverage_entries))
    except ImportError:
        print("compiled kernel unavailable; benchmarking the fallback only")

    original = kernels.coverage_entries
    results = {}
    images = {}
    try:
        for name, fn in backends:
            kernels.coverage_entries = fn
            fwd = _time(lambda: render(sketch), args.reps)
            bwd = _time(lambda: render_backward(sketch, cot), max(args.reps // 2, 3))
            results[name] = (fwd, bwd)
            images[name] = render(sketch)
    finally:
        kernels.coverage_entries = original

    print(f"\ncanvas {args.canvas}x{args.canvas}, {args.strokes} strokes x {args.segments} segments")
    print(f"{'backend':<10}{'render':>12}{'backward':>12}")
    for name, (fwd, bwd) in results.items():
        print(f"{name:<10}{fwd * 1e3:>10.2f}ms{bwd * 1e3:>10.2f}ms")
    if len(results) == 2:
        f_ratio = results["numpy"][0] / results["cython"][0]
        b_ratio = results["numpy"][1] / results["cython"][1]
        print(f"{'speedup':<10}{f_ratio:>11.1f}x{b_ratio:>11.1f}x")
        diff = np.abs(images["cython"] - images["numpy"]).max()
        print(f"max pixel difference between backends: {diff:.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
