"""Pure numpy implementation of the sampling kernels.

Mirrors ``_kernels.pyx`` operation for operation (same draws, same
floating-point evaluation order), so both backends return identical bits.
Vectorized across samples; the step loop stays in Python.
"""
import numpy as np

from . import rng

FLAG_MAX_TERMS = 1
FLAG_DIVERGENT = 2
FLAG_OVERFLOW = 4
FLAG_RESAMPLED = 8
MAX_RETRIES = 8

_CHUNK = 1 << 15
_U = np.uint64


def _pick(u, cur, start, cum):
    m = np.empty(len(u), dtype=np.int64)
    for s in np.unique(cur):
        sel = cur == s
        lo, hi = int(start[s]), int(start[s + 1])
        idx = lo + np.searchsorted(cum[lo:hi], u[sel], side="right")
        m[sel] = np.minimum(idx, hi - 1)
    return m


def path_outcomes(start, cum, nxt, state, key, length):
    u = rng.path_uniforms(int(key), int(length))
    out = np.empty(length, dtype=np.int64)
    cur = int(state)
    start = np.asarray(start)
    cum = np.asarray(cum)
    nxt = np.asarray(nxt)
    for n in range(length):
        lo, hi = int(start[cur]), int(start[cur + 1])
        m = min(lo + int(np.searchsorted(cum[lo:hi], u[n], side="right")), hi - 1)
        out[n] = m
        cur = int(nxt[m])
    return out


def backward_fill(start, cum, nxt, xi, rho, state, base, first_index, eps, min_terms, max_terms,
                  out_r, out_xi0, out_rho0, out_terms, out_flags, gamma=None, sup=None):
    start, cum, nxt, xi, rho = map(np.asarray, (start, cum, nxt, xi, rho))
    count = len(out_r)
    big = 1.0 / eps
    track = gamma is not None
    if track:
        gamma = np.asarray(gamma, dtype=float)
    for c0 in range(0, count, _CHUNK):
        c1 = min(count, c0 + _CHUNK)
        k = c1 - c0
        keys = rng.sample_keys(int(base), int(first_index) + c0, k)
        cur = np.full(k, int(state), dtype=np.int64)
        r = np.zeros(k)
        p = np.ones(k)
        flags = np.zeros(k, dtype=np.uint8)
        terms = np.zeros(k, dtype=np.int64)
        best = np.abs(gamma[cur]) if track else None
        active = np.arange(k)
        n = 0
        with np.errstate(over="ignore", invalid="ignore"):
            while active.size:
                u = rng.uniforms(keys[active], n)
                m = _pick(u, cur[active], start, cum)
                if n == 0:
                    out_xi0[c0:c1] = xi[m]
                    out_rho0[c0:c1] = rho[m]
                last_r = r[active]
                ra = last_r + p[active] * xi[m]
                pa = p[active] * rho[m]
                cur[active] = nxt[m]
                n += 1
                terms[active] = n
                done = np.zeros(active.size, dtype=bool)

                bad = ~(np.isfinite(ra) & np.isfinite(pa))
                if bad.any():
                    sgn = np.where(last_r[bad] != 0.0, last_r[bad], pa[bad])
                    ra[bad] = np.copysign(np.finfo(float).max, sgn)
                    flags[active[bad]] |= FLAG_OVERFLOW
                    done |= bad
                ok = ~bad
                if track:
                    v = np.abs(ra + gamma[cur[active]] * pa)
                    upd = ok & (v > best[active])
                    best[active[upd]] = v[upd]
                if n < min_terms:
                    flags[active[ok & (np.abs(pa) > big)]] |= FLAG_DIVERGENT
                else:
                    done |= ok & (np.abs(pa) < eps)
                if n >= max_terms:
                    flags[active[ok & ~done]] |= FLAG_MAX_TERMS
                    done |= ok
                r[active] = ra
                p[active] = pa
                active = active[~done]
        out_r[c0:c1] = r
        out_terms[c0:c1] = terms
        out_flags[c0:c1] = flags
        if track:
            sup[c0:c1] = best


def _forward_chunk(start, cum, nxt, xi, rho, state, keys, burn_in, s0):
    k = len(keys)
    cur = np.full(k, int(state), dtype=np.int64)
    ms = np.empty((burn_in, k), dtype=np.int64)
    for n in range(burn_in):
        m = _pick(rng.uniforms(keys, n), cur, start, cum)
        ms[n] = m
        cur = nxt[m]
    sv = np.full(k, float(s0))
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(burn_in - 1, -1, -1):
            m = ms[n]
            sv = xi[m] + rho[m] * sv
    return sv


def forward_fill(start, cum, nxt, xi, rho, state, base, first_index, burn_in, s0, out_s, out_flags):
    start, cum, nxt, xi, rho = map(np.asarray, (start, cum, nxt, xi, rho))
    count = len(out_s)
    chunk = max(1, min(_CHUNK, 4_000_000 // max(1, burn_in)))
    for c0 in range(0, count, chunk):
        c1 = min(count, c0 + chunk)
        keys0 = rng.sample_keys(int(base), int(first_index) + c0, c1 - c0)
        sv = _forward_chunk(start, cum, nxt, xi, rho, state, keys0, burn_in, s0)
        flags = np.zeros(c1 - c0, dtype=np.uint8)
        for attempt in range(1, MAX_RETRIES):
            bad = np.nonzero(~np.isfinite(sv))[0]
            if not bad.size:
                break
            flags[bad] |= FLAG_RESAMPLED
            with np.errstate(over="ignore"):
                keys = rng.mix64_array(keys0[bad] ^ (_U(attempt) * _U(rng.GOLDEN)))
            sv[bad] = _forward_chunk(start, cum, nxt, xi, rho, state, keys, burn_in, s0)
        bad = ~np.isfinite(sv)
        if bad.any():
            flags[bad] |= FLAG_RESAMPLED | FLAG_OVERFLOW
            sv[bad] = np.copysign(np.finfo(float).max, sv[bad])
        out_s[c0:c1] = sv
        out_flags[c0:c1] = flags
