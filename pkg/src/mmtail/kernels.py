"""Backend selection for the sampling kernels.

The compiled extension ``_kernels`` is used when importable; otherwise the
numpy fallback.  Set ``MMTAIL_KERNELS=python`` to force the fallback.
"""
import os

import numpy as np

from . import _pykernels

FLAG_MAX_TERMS = _pykernels.FLAG_MAX_TERMS
FLAG_DIVERGENT = _pykernels.FLAG_DIVERGENT
FLAG_OVERFLOW = _pykernels.FLAG_OVERFLOW
FLAG_RESAMPLED = _pykernels.FLAG_RESAMPLED

_compiled = None
if os.environ.get("MMTAIL_KERNELS", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:  # pragma: no cover - depends on the build
        _compiled = None

BACKENDS = {"python": _pykernels}
if _compiled is not None:
    BACKENDS["cython"] = _compiled

BACKEND = "cython" if _compiled is not None else "python"


def get(name=None):
    """Kernel module by name; ``None`` selects the active backend."""
    return BACKENDS[name or BACKEND]


def path_outcomes(table, state, key, length, backend=None):
    return get(backend).path_outcomes(table.start, table.cum, table.nxt, int(state), int(key), int(length))


def backward(table, state, base, first_index, count, eps, min_terms, max_terms, gamma=None, backend=None):
    """Run ``count`` backward-series samples; returns a dict of arrays."""
    if min_terms < 1 or max_terms < min_terms:
        raise ValueError("need 1 <= min_terms <= max_terms")
    if not eps > 0:
        raise ValueError("eps_trunc must be positive")
    out = {
        "R": np.empty(count),
        "xi0": np.empty(count),
        "rho0": np.empty(count),
        "terms": np.empty(count, dtype=np.int64),
        "flags": np.empty(count, dtype=np.uint8),
    }
    kw = {}
    if gamma is not None:
        out["sup"] = np.empty(count)
        kw = {"gamma": np.ascontiguousarray(gamma, dtype=float), "sup": out["sup"]}
    get(backend).backward_fill(
        table.start, table.cum, table.nxt, table.xi, table.rho,
        int(state), int(base), int(first_index), float(eps), int(min_terms), int(max_terms),
        out["R"], out["xi0"], out["rho0"], out["terms"], out["flags"], **kw,
    )
    return out


def backward_into(table, state, base, first_index, eps, min_terms, max_terms, R, xi0, rho0, terms, flags,
                  backend=None):
    """Fill pre-allocated slices in place (used by the worker pool)."""
    get(backend).backward_fill(
        table.start, table.cum, table.nxt, table.xi, table.rho,
        int(state), int(base), int(first_index), float(eps), int(min_terms), int(max_terms),
        R, xi0, rho0, terms, flags,
    )


def forward(table, state, base, first_index, count, burn_in, s0, backend=None):
    if burn_in < 1:
        raise ValueError("burn_in must be >= 1")
    S = np.empty(count)
    flags = np.empty(count, dtype=np.uint8)
    get(backend).forward_fill(
        table.start, table.cum, table.nxt, table.xi, table.rho,
        int(state), int(base), int(first_index), int(burn_in), float(s0), S, flags,
    )
    return S, flags
