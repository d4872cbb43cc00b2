"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 3]

Each kernel runs on the same inputs under both backends; outputs are
checked for agreement before timings are reported.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from constlab import _pykernels
from constlab.sieve import sieve_primes

try:
    from constlab import _kernels
except ImportError:
    _kernels = None


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases():
    rng = np.random.default_rng(0)
    table = sieve_primes(2 * 10**6)
    n = 10**6
    mask = np.zeros(n + 1, dtype=np.uint8)
    mask[table.primes[table.primes <= n]] = 1
    support = np.flatnonzero(mask).astype(np.int64)
    base = table.primes[table.primes <= 1000].astype(np.int64)

    def seg(mod):
        s = np.ones(1 << 20, dtype=np.uint8)
        mod.mark_segment(s, 10**6, base)
        return s

    yield "mark_segment 2^20", seg
    small = 20000
    yield "pattern_counts (0,1,2) N=2e4", lambda mod: mod.pattern_counts_by_r(
        mask[: small + 1].copy(), support[support <= small], np.array([0, 1, 2], dtype=np.int64), small - 1)
    vals = rng.random((1, 100001))
    offs = np.ascontiguousarray(np.outer(np.arange(1, 1001), [0, 1]), dtype=np.int64)
    yield "product_sums n=1e5 R=1000 k=2", lambda mod: mod.product_sums(
        vals, np.zeros(2, dtype=np.int64), offs, 1, 100000)
    yield "support_counts n=1e6 R=1000 k=2", lambda mod: mod.support_counts(mask, support, offs)
    side = 300
    grid = np.zeros((side + 1, side + 1), dtype=np.uint8)
    p = table.primes[table.primes <= side]
    grid[np.ix_(p, p)] = 1
    pts = np.ascontiguousarray(np.argwhere(grid), dtype=np.int64)
    deltas = np.array([[1, 0], [0, 1], [1, 1]], dtype=np.int64)
    yield "probe_counts square N=300", lambda mod: mod.probe_counts_by_r(grid.ravel(), side, pts, deltas, side - 1)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _kernels is None:
        print("compiled extension not built; only the numpy backend is available")
    print(f"{'kernel':34s} {'numpy [s]':>10s} {'cython [s]':>11s} {'speedup':>8s}")
    for name, fn in cases():
        tp, outp = best_of(lambda: fn(_pykernels), args.repeat)
        if _kernels is None:
            print(f"{name:34s} {tp:10.4f} {'-':>11s} {'-':>8s}")
            continue
        tc, outc = best_of(lambda: fn(_kernels), args.repeat)
        if not np.allclose(np.asarray(outp, dtype=float), np.asarray(outc, dtype=float), rtol=1e-10):
            raise SystemExit(f"{name}: backends disagree")
        print(f"{name:34s} {tp:10.4f} {tc:11.4f} {tp / tc:7.1f}x")


if __name__ == "__main__":
    main()
