"""Counter-based random streams.

Every draw is a pure function of ``(seed, purpose, state, index, step)``,
so samples do not depend on how work is split across workers.

Derivation (all arithmetic modulo 2**64, ``G = 0x9E3779B97F4A7C15``)::

    mix(z)    = SplitMix64 finalizer
    base      = mix(mix(mix(seed ^ SEED_SALT) + purpose * G) + (state + 1) * G)
    key(i)    = mix(base + (i + 1) * G)             # one key per sample index
    bits(k,n) = mix(key + (n + 1) * G)              # n-th draw of the sample
    u(k,n)    = (bits >> 11) * 2**-53               # uniform on [0, 1)

The compiled core implements the same formulas in C; ``tests/test_kernels``
pins them against each other.
"""
from __future__ import annotations

import numpy as np

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
SEED_SALT = 0x243F6A8885A308D3
SCHEME = "splitmix64-ctr/v1"

PURPOSE_PATH = 1
PURPOSE_BACKWARD = 2
PURPOSE_FORWARD = 3
PURPOSE_SYMMETRIZATION = 4


def mix64(z: int) -> int:
    z &= MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def stream_base(seed: int, purpose: int, state: int) -> int:
    if seed < 0:
        raise ValueError("seed must be non-negative")
    k = mix64(seed ^ SEED_SALT)
    k = mix64(k + purpose * GOLDEN)
    return mix64(k + (state + 1) * GOLDEN)


def sample_key(base: int, index: int) -> int:
    return mix64(base + (index + 1) * GOLDEN)


def uniform(key: int, step: int) -> float:
    return (mix64(key + (step + 1) * GOLDEN) >> 11) * 2.0**-53


_U = np.uint64


def mix64_array(z: np.ndarray) -> np.ndarray:
    """Vectorized ``mix64`` on a uint64 array (wrapping arithmetic)."""
    z = z ^ (z >> _U(30))
    z = z * _U(0xBF58476D1CE4E5B9)
    z = z ^ (z >> _U(27))
    z = z * _U(0x94D049BB133111EB)
    return z ^ (z >> _U(31))


def sample_keys(base: int, first_index: int, count: int) -> np.ndarray:
    idx = np.arange(first_index + 1, first_index + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64_array(_U(base) + idx * _U(GOLDEN))


def uniforms(keys: np.ndarray, step: int) -> np.ndarray:
    """Draw number ``step`` for each key in ``keys``."""
    with np.errstate(over="ignore"):
        bits = mix64_array(keys + _U(((step + 1) * GOLDEN) & MASK))
    return (bits >> _U(11)).astype(np.float64) * 2.0**-53


def path_uniforms(key: int, length: int) -> np.ndarray:
    """Draws ``0 .. length-1`` of a single key."""
    steps = np.arange(1, length + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        bits = mix64_array(_U(key) + steps * _U(GOLDEN))
    return (bits >> _U(11)).astype(np.float64) * 2.0**-53
