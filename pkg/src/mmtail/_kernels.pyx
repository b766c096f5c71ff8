# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled sampling kernels.

Same contracts and bit-level results as ``_pykernels``; see ``rng`` for the
stream derivation.  All loops run without the GIL so worker threads scale.
"""
from libc.math cimport fabs, isfinite, copysign
from libc.float cimport DBL_MAX
from libc.stdint cimport uint64_t, int64_t, uint8_t
from libc.stdlib cimport malloc, free

import numpy as np

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL

cdef enum:
    FLAG_MAX_TERMS = 1
    FLAG_DIVERGENT = 2
    FLAG_OVERFLOW = 4
    FLAG_RESAMPLED = 8
    MAX_RETRIES = 8


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double uniform(uint64_t key, uint64_t step) nogil:
    return <double>(mix64(key + (step + 1) * GOLDEN) >> 11) * (1.0 / 9007199254740992.0)


cdef inline int64_t pick(double u, const double* cum, int64_t lo, int64_t hi) nogil:
    # first index in [lo, hi) with cum > u, clamped to hi - 1
    cdef int64_t a = lo, b = hi, m, k
    if hi - lo <= 16:
        # short rows: branchless count of entries <= u (same index as bisection)
        for k in range(lo, hi):
            a += cum[k] <= u
    else:
        while a < b:
            m = (a + b) >> 1
            if cum[m] > u:
                b = m
            else:
                a = m + 1
    if a >= hi:
        a = hi - 1
    return a


def path_outcomes(const int64_t[::1] start, const double[::1] cum, const int64_t[::1] nxt,
                  int64_t state, uint64_t key, int64_t length):
    out = np.empty(length, dtype=np.int64)
    cdef int64_t[::1] o = out
    cdef int64_t n, m, cur = state
    with nogil:
        for n in range(length):
            m = pick(uniform(key, n), &cum[0], start[cur], start[cur + 1])
            o[n] = m
            cur = nxt[m]
    return out


def backward_fill(const int64_t[::1] start, const double[::1] cum, const int64_t[::1] nxt,
                  const double[::1] xi, const double[::1] rho,
                  int64_t state, uint64_t base, int64_t first_index,
                  double eps, int64_t min_terms, int64_t max_terms,
                  double[::1] out_r, double[::1] out_xi0, double[::1] out_rho0,
                  int64_t[::1] out_terms, uint8_t[::1] out_flags,
                  gamma=None, sup=None):
    """Truncated backward series, one sample per output slot.

    When ``gamma`` (per-state values) and ``sup`` are given, also records
    ``max_n |R_n + gamma[x_{n-1}] * Pi_n|`` along the path.
    """
    cdef Py_ssize_t count = out_r.shape[0]
    cdef Py_ssize_t i
    cdef int64_t n, m, cur
    cdef uint64_t key
    cdef double r, p, last_r, v, best, big = 1.0 / eps
    cdef uint8_t flag
    cdef const double[::1] g
    cdef double[::1] s
    cdef bint track = gamma is not None
    if track:
        g = gamma
        s = sup
    with nogil:
        for i in range(count):
            key = mix64(base + <uint64_t>(first_index + i + 1) * GOLDEN)
            cur = state
            r = 0.0
            p = 1.0
            flag = 0
            n = 0
            best = 0.0
            if track:
                best = fabs(g[cur])
            while True:
                m = pick(uniform(key, n), &cum[0], start[cur], start[cur + 1])
                if n == 0:
                    out_xi0[i] = xi[m]
                    out_rho0[i] = rho[m]
                last_r = r
                r = r + p * xi[m]
                p = p * rho[m]
                cur = nxt[m]
                n = n + 1
                if not (isfinite(r) and isfinite(p)):
                    flag |= FLAG_OVERFLOW
                    r = copysign(DBL_MAX, last_r if last_r != 0.0 else p)
                    break
                if track:
                    v = fabs(r + g[cur] * p)
                    if v > best:
                        best = v
                if n < min_terms:
                    if fabs(p) > big:
                        flag |= FLAG_DIVERGENT
                elif fabs(p) < eps:
                    break
                if n >= max_terms:
                    flag |= FLAG_MAX_TERMS
                    break
            out_r[i] = r
            out_terms[i] = n
            out_flags[i] = flag
            if track:
                s[i] = best


def forward_fill(const int64_t[::1] start, const double[::1] cum, const int64_t[::1] nxt,
                 const double[::1] xi, const double[::1] rho,
                 int64_t state, uint64_t base, int64_t first_index,
                 int64_t burn_in, double s0,
                 double[::1] out_s, uint8_t[::1] out_flags):
    """Iterate ``S <- xi + rho * S`` from ``s0`` over ``burn_in`` coefficients.

    The coefficients are drawn along a path from ``state`` and consumed
    oldest-first, i.e. in reverse path order.
    """
    cdef Py_ssize_t count = out_s.shape[0]
    cdef Py_ssize_t i
    cdef int64_t n, m, cur, attempt
    cdef uint64_t key0, key
    cdef double sv
    cdef uint8_t flag
    cdef int64_t* buf = <int64_t*> malloc(burn_in * sizeof(int64_t))
    if buf == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(count):
                key0 = mix64(base + <uint64_t>(first_index + i + 1) * GOLDEN)
                flag = 0
                for attempt in range(MAX_RETRIES):
                    key = key0 if attempt == 0 else mix64(key0 ^ (<uint64_t>attempt * GOLDEN))
                    cur = state
                    for n in range(burn_in):
                        m = pick(uniform(key, n), &cum[0], start[cur], start[cur + 1])
                        buf[n] = m
                        cur = nxt[m]
                    sv = s0
                    for n in range(burn_in - 1, -1, -1):
                        sv = xi[buf[n]] + rho[buf[n]] * sv
                    if isfinite(sv):
                        break
                    flag |= FLAG_RESAMPLED
                if not isfinite(sv):
                    flag |= FLAG_OVERFLOW
                    sv = copysign(DBL_MAX, sv)
                out_s[i] = sv
                out_flags[i] = flag
    finally:
        free(buf)
