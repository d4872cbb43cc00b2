"""Pure numpy implementations of the hot loops.

These are the reference versions of the routines in ``_kernels.pyx``; both
expose identical signatures and results.  Arrays follow one convention
throughout: a value array of length ``n + 1`` represents a function on
``[1, n]`` (slot 0 is ignored) extended by zero to all of Z.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def mark_segment(seg: np.ndarray, lo: int, base_primes: np.ndarray) -> None:
    """Clear composites in ``seg``, where ``seg[i]`` stands for ``lo + i``."""
    hi = lo + seg.shape[0]
    for p in base_primes:
        p = int(p)
        if p * p >= hi:
            break
        start = max(p * p, -(-lo // p) * p)
        seg[start - lo :: p] = 0


def pattern_counts_by_r(
    mask: np.ndarray, support: np.ndarray, pattern: np.ndarray, rmax: int
) -> np.ndarray:
    """``out[r] = #{x in support : mask[x + r*c] for every c in pattern}``.

    ``pattern`` is sorted, nonnegative and starts at 0; ``mask`` has length
    ``n + 1`` and anything past ``n`` counts as absent.
    """
    n = mask.shape[0] - 1
    out = np.zeros(rmax + 1, dtype=np.int64)
    sup = np.asarray(support, dtype=np.int64)
    rest = [int(c) for c in pattern[1:]]
    if not rest:
        out[1:] = sup.shape[0]
        return out
    top = rest[-1]
    for r in range(1, rmax + 1):
        x = sup[: np.searchsorted(sup, n - r * top, side="right")]
        if x.shape[0] == 0:
            break
        ok = mask[x + r * rest[0]].astype(bool)
        for c in rest[1:]:
            ok &= mask[x + r * c].astype(bool)
        out[r] = int(np.count_nonzero(ok))
    return out


def product_sums(
    stack: np.ndarray, rows: np.ndarray, offsets: np.ndarray, lo: int, hi: int
) -> np.ndarray:
    """``out[t] = sum_{a=lo}^{hi} prod_j stack[rows[j]][a + offsets[t, j]]``.

    Each row of ``stack`` is zero outside ``[1, n]``.
    """
    n = stack.shape[1] - 1
    R, k = offsets.shape
    out = np.zeros(R, dtype=np.float64)
    for t in range(R):
        off = offsets[t]
        a0 = max(lo, 1 - int(off.min())) if k else lo
        a1 = min(hi, n - int(off.max())) if k else hi
        if a1 < a0:
            continue
        if k == 0:
            out[t] = float(a1 - a0 + 1)
            continue
        prod = stack[rows[0], a0 + off[0] : a1 + off[0] + 1].copy()
        for j in range(1, k):
            prod *= stack[rows[j], a0 + off[j] : a1 + off[j] + 1]
        out[t] = float(prod.sum())
    return out


def support_counts(
    mask: np.ndarray, support: np.ndarray, offsets: np.ndarray
) -> np.ndarray:
    """``out[t] = #{a in [1, n] : a + offsets[t, j] in support for all j}``.

    ``support`` is the sorted list of indices where ``mask`` is set.
    """
    n = mask.shape[0] - 1
    R, k = offsets.shape
    out = np.zeros(R, dtype=np.int64)
    sup = np.asarray(support, dtype=np.int64)
    for t in range(R):
        off = offsets[t]
        # anchor on the first form: a = x - off[0] must lie in [1, n]
        a = sup - off[0]
        a = a[(a >= 1) & (a <= n)]
        ok = np.ones(a.shape[0], dtype=bool)
        for j in range(1, k):
            y = a + off[j]
            inside = (y >= 1) & (y <= n)
            ok &= inside
            ok[inside] &= mask[y[inside]].astype(bool)
        out[t] = int(np.count_nonzero(ok))
    return out


def probe_counts_by_r(
    mask: np.ndarray, side: int, points: np.ndarray, deltas: np.ndarray, rmax: int
) -> np.ndarray:
    """Count, per r, the points x of A with every ``x + r*delta_j`` in A.

    ``mask`` is the flattened C-order indicator of A over ``[0, side]^d`` and
    ``points`` lists A as an ``(n, d)`` array.
    """
    out = np.zeros(rmax + 1, dtype=np.int64)
    npts, d = points.shape
    if npts == 0:
        return out
    if deltas.shape[0] == 0:
        out[1:] = npts
        return out
    strides = np.array([(side + 1) ** (d - 1 - i) for i in range(d)], dtype=np.int64)
    for r in range(1, rmax + 1):
        ok = np.ones(npts, dtype=bool)
        for delta in deltas:
            q = points + r * delta
            inside = np.all((q >= 1) & (q <= side), axis=1)
            ok &= inside
            idx = q[ok] @ strides
            ok[ok] = mask[idx].astype(bool)
            if not ok.any():
                break
        out[r] = int(np.count_nonzero(ok))
    return out
