"""Benchmark the compiled scan kernels against the NumPy fallback.

Runs the two hot paths on a realistic workload (a 256x256 fabric with a
period-16 motif, filter size 17) and reports wall-clock times per backend.

    python benchmarks/bench_kernels.py [--size 256] [--period 16] [--repeat 3]
"""

import argparse
import time

import numpy as np

from loomspect import _backend
from loomspect.feature_bank import grow_features
from loomspect.imaging import preprocess
from loomspect.evaluation import synth_fabric
from loomspect.patching import extract_patches, filter_by_variance, shuffle_patches
from loomspect.anomaly import range_normalize


def _time(fn, repeat):
    best = float("inf")
    result = None
    for _ in range(repeat):
        start = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - start)
    return best, result


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=256)
    parser.add_argument("--period", type=int, default=16)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--theta", type=float, default=0.7)
    args = parser.parse_args()

    img, _ = synth_fabric(args.period, args.size, noise=4.0, seed=7)
    pre = preprocess(img)
    p = args.period + 1 if args.period % 2 == 0 else args.period
    ps = shuffle_patches(filter_by_variance(extract_patches(pre, p), 0.0), seed=42)
    values = ps.values
    print(f"workload: {values.shape[0]} patches of dim {values.shape[1]} "
          f"(size {args.size}, filter {p})")
    print(f"backends available: {', '.join(_backend.available_backends())}")

    banks = {}
    for backend in _backend.available_backends():
        seconds, (weights, counts, _) = _time(
            lambda b=backend: grow_features(values, args.theta, backend=b), args.repeat
        )
        banks[backend] = weights
        print(f"grow_bank[{backend:>8}]: {seconds:8.3f} s   ({weights.shape[0]} features)")

    queries = range_normalize(values)
    for backend in _backend.available_backends():
        bank = range_normalize(banks[backend])
        seconds, (sums, _) = _time(
            lambda b=backend, k=bank: _backend.nearest_l1(queries, k, backend=b),
            args.repeat,
        )
        print(f"nearest_l1[{backend:>8}]: {seconds:8.3f} s   (max dist {sums.max() / values.shape[1]:.4f})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
