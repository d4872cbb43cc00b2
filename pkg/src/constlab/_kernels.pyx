# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the routines in ``_pykernels``.

Signatures and results match the numpy versions exactly; inner loops run
without the GIL.
"""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t, uint8_t
from libc.stdlib cimport free, malloc

cnp.import_array()

NAME = "cython"


def mark_segment(uint8_t[::1] seg, int64_t lo, const int64_t[::1] base_primes):
    cdef Py_ssize_t size = seg.shape[0]
    cdef int64_t hi = lo + size
    cdef Py_ssize_t t, np_ = base_primes.shape[0]
    cdef int64_t p, start, m
    with nogil:
        for t in range(np_):
            p = base_primes[t]
            if p * p >= hi:
                break
            start = ((lo + p - 1) // p) * p
            if start < p * p:
                start = p * p
            m = start - lo
            while m < size:
                seg[m] = 0
                m += p


def pattern_counts_by_r(const uint8_t[::1] mask, const int64_t[::1] support,
                        const int64_t[::1] pattern, int64_t rmax):
    cdef int64_t n = mask.shape[0] - 1
    cdef Py_ssize_t ns = support.shape[0], k = pattern.shape[0]
    out_arr = np.zeros(rmax + 1, dtype=np.int64)
    cdef int64_t[::1] out = out_arr
    cdef int64_t r, x, top, cnt
    cdef Py_ssize_t i, j
    cdef bint ok
    if k <= 1:
        out_arr[1:] = ns
        return out_arr
    top = pattern[k - 1]
    with nogil:
        for r in range(1, rmax + 1):
            cnt = 0
            for i in range(ns):
                x = support[i]
                if x + r * top > n:
                    break
                ok = True
                for j in range(1, k):
                    if not mask[x + r * pattern[j]]:
                        ok = False
                        break
                if ok:
                    cnt += 1
            out[r] = cnt
    return out_arr


cdef enum:
    BLOCK = 256


def product_sums(const double[:, ::1] stack, const int64_t[::1] rows,
                 const int64_t[:, ::1] offsets, int64_t lo, int64_t hi):
    cdef int64_t n = stack.shape[1] - 1
    cdef Py_ssize_t R = offsets.shape[0], k = offsets.shape[1]
    out_arr = np.zeros(R, dtype=np.float64)
    cdef double[::1] out = out_arr
    if R == 0:
        return out_arr
    cdef Py_ssize_t t, j, i, m
    cdef int64_t a0, a1, o, b
    cdef double s, c, y, tmp, p0, p1, p2, p3, blk
    cdef const double* base = &stack[0, 0]
    cdef const double* src
    cdef Py_ssize_t width = stack.shape[1]
    cdef double buf[BLOCK]
    cdef const double** ptr = <const double**> malloc((k + 1) * sizeof(double*))
    if ptr == NULL:
        raise MemoryError()
    try:
        with nogil:
            for t in range(R):
                a0 = lo
                a1 = hi
                for j in range(k):
                    o = offsets[t, j]
                    if 1 - o > a0:
                        a0 = 1 - o
                    if n - o < a1:
                        a1 = n - o
                if a1 < a0:
                    continue
                if k == 0:
                    out[t] = <double>(a1 - a0 + 1)
                    continue
                for j in range(k):
                    ptr[j] = base + rows[j] * width + offsets[t, j]
                s = 0.0
                c = 0.0
                b = a0
                while b <= a1:
                    m = BLOCK if a1 - b + 1 > BLOCK else a1 - b + 1
                    src = ptr[0] + b
                    for i in range(m):
                        buf[i] = src[i]
                    for j in range(1, k):
                        src = ptr[j] + b
                        for i in range(m):
                            buf[i] = buf[i] * src[i]
                    p0 = 0.0
                    p1 = 0.0
                    p2 = 0.0
                    p3 = 0.0
                    i = 0
                    while i + 3 < m:
                        p0 += buf[i]
                        p1 += buf[i + 1]
                        p2 += buf[i + 2]
                        p3 += buf[i + 3]
                        i += 4
                    while i < m:
                        p0 += buf[i]
                        i += 1
                    blk = (p0 + p1) + (p2 + p3)
                    # Kahan accumulation of the block totals
                    y = blk - c
                    tmp = s + y
                    c = (tmp - s) - y
                    s = tmp
                    b += m
                out[t] = s
    finally:
        free(ptr)
    return out_arr


def support_counts(const uint8_t[::1] mask, const int64_t[::1] support,
                   const int64_t[:, ::1] offsets):
    cdef int64_t n = mask.shape[0] - 1
    cdef Py_ssize_t R = offsets.shape[0], k = offsets.shape[1]
    cdef Py_ssize_t ns = support.shape[0]
    out_arr = np.zeros(R, dtype=np.int64)
    cdef int64_t[::1] out = out_arr
    cdef Py_ssize_t t, i, j
    cdef int64_t a, y, cnt
    cdef bint ok
    with nogil:
        for t in range(R):
            cnt = 0
            for i in range(ns):
                a = support[i] - offsets[t, 0]
                if a < 1:
                    continue
                if a > n:
                    break
                ok = True
                for j in range(1, k):
                    y = a + offsets[t, j]
                    if y < 1 or y > n or not mask[y]:
                        ok = False
                        break
                if ok:
                    cnt += 1
            out[t] = cnt
    return out_arr


def probe_counts_by_r(const uint8_t[::1] mask, int64_t side,
                      const int64_t[:, ::1] points, const int64_t[:, ::1] deltas,
                      int64_t rmax):
    cdef Py_ssize_t npts = points.shape[0], d = points.shape[1]
    cdef Py_ssize_t nd = deltas.shape[0]
    out_arr = np.zeros(rmax + 1, dtype=np.int64)
    cdef int64_t[::1] out = out_arr
    if npts == 0:
        return out_arr
    if nd == 0:
        out_arr[1:] = npts
        return out_arr
    strides_arr = np.array([(side + 1) ** (d - 1 - i) for i in range(d)], dtype=np.int64)
    cdef int64_t[::1] strides = strides_arr
    cdef int64_t r, q, idx, cnt
    cdef Py_ssize_t p, j, i
    cdef bint ok
    with nogil:
        for r in range(1, rmax + 1):
            cnt = 0
            for p in range(npts):
                ok = True
                for j in range(nd):
                    idx = 0
                    for i in range(d):
                        q = points[p, i] + r * deltas[j, i]
                        if q < 1 or q > side:
                            ok = False
                            break
                        idx += q * strides[i]
                    if not ok or not mask[idx]:
                        ok = False
                        break
                if ok:
                    cnt += 1
            out[r] = cnt
    return out_arr
