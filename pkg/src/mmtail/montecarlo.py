"""Monte Carlo samples of the stationary solution ``R`` started from each state.

Backward sampling sums ``xi_0 + sum_n xi_n Pi_n`` along a fresh path until
``|Pi_n| < eps`` (after at least ``min_terms`` terms) or ``max_terms``.
Forward sampling iterates ``S <- xi + rho * S`` instead.  Every sample
``(state, index)`` has its own counter-based stream (see ``rng``), so a batch
does not depend on the number of workers.
"""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels, rng
from .errors import AssumptionViolation, DivergenceSuspected
from .model import MmpModel

EPS_TRUNC = 1e-12
MIN_TERMS = 64
MAX_TERMS = 10_000
DIVERGENT_FRACTION = 1e-3
CHUNK = 1 << 16

CSV_COLUMNS = ("state", "index", "R", "xi0", "rho0", "terms")
BINARY_DTYPE = np.dtype([
    ("state", "<i8"),
    ("index", "<i8"),
    ("R", "<f8"),
    ("xi0", "<f8"),
    ("rho0", "<f8"),
    ("terms", "<i8"),
    ("flags", "u1"),
])


@dataclass
class StateSamples:
    R: np.ndarray
    xi0: np.ndarray
    rho0: np.ndarray
    terms: np.ndarray
    flags: np.ndarray

    def __len__(self):
        return len(self.R)

    @classmethod
    def empty(cls, n=0):
        return cls(np.empty(n), np.empty(n), np.empty(n), np.empty(n, dtype=np.int64),
                   np.zeros(n, dtype=np.uint8))


@dataclass
class SampleBatch:
    """Samples of ``R`` for every initial state, with the paired first draw."""

    by_state: list
    eps_trunc: float | None = None
    min_terms: int | None = None
    max_terms: int | None = None
    seed: int | None = None
    scheme: str = rng.SCHEME
    stats: dict = field(default_factory=dict)

    @property
    def max_terms_hits(self) -> int:
        return int(sum(np.count_nonzero(s.flags & kernels.FLAG_MAX_TERMS) for s in self.by_state))

    def truncation(self) -> dict:
        return {
            "eps_trunc": self.eps_trunc,
            "min_terms": self.min_terms,
            "max_terms": self.max_terms,
            "max_terms_hits": self.max_terms_hits,
            "overflow": int(sum(np.count_nonzero(s.flags & kernels.FLAG_OVERFLOW) for s in self.by_state)),
            "divergent_flagged": int(sum(np.count_nonzero(s.flags & kernels.FLAG_DIVERGENT) for s in self.by_state)),
        }

    def to_records(self) -> np.ndarray:
        parts = []
        for x, s in enumerate(self.by_state):
            rec = np.empty(len(s), dtype=BINARY_DTYPE)
            rec["state"] = x
            rec["index"] = np.arange(len(s))
            rec["R"], rec["xi0"], rec["rho0"] = s.R, s.xi0, s.rho0
            rec["terms"], rec["flags"] = s.terms, s.flags
            parts.append(rec)
        return np.concatenate(parts) if parts else np.empty(0, dtype=BINARY_DTYPE)

    @classmethod
    def from_records(cls, rec: np.ndarray, n_states: int | None = None) -> "SampleBatch":
        S = n_states if n_states is not None else (int(rec["state"].max()) + 1 if len(rec) else 0)
        by_state = []
        for x in range(S):
            r = rec[rec["state"] == x]
            r = r[np.argsort(r["index"], kind="stable")]
            flags = r["flags"] if "flags" in r.dtype.names else np.zeros(len(r), np.uint8)
            by_state.append(StateSamples(
                np.ascontiguousarray(r["R"], dtype=float), np.ascontiguousarray(r["xi0"], dtype=float),
                np.ascontiguousarray(r["rho0"], dtype=float), np.ascontiguousarray(r["terms"], dtype=np.int64),
                np.ascontiguousarray(flags, dtype=np.uint8)))
        return cls(by_state=by_state)


def eps_for_kappa(kappa: float, bias: float = 1e-4, cap: float = EPS_TRUNC) -> float:
    """Truncation level with ``eps^kappa <= bias``.

    The series left out after stopping is ``Pi_n`` times an independent copy
    of ``R``, whose tail scales like ``|Pi_n|^kappa``; for small ``kappa``
    the default ``1e-12`` leaves a visible deficit far out in the tail.
    """
    return min(cap, bias ** (1.0 / kappa))


def check_contraction(model: MmpModel) -> float:
    """``E log|rho|`` under the stationary chain; must be negative to sample."""
    from .spectral import log_moment_drift

    drift = log_moment_drift(model)
    if not drift < 0:
        raise AssumptionViolation(f"E log|rho| = {drift:.6g} >= 0: the backward series diverges")
    return drift


def sample_r_backward(model: MmpModel, initial_state: int, seed: int, index: int = 0,
                      eps_trunc: float = EPS_TRUNC, min_terms: int = MIN_TERMS, max_terms: int = MAX_TERMS):
    """One backward-series sample: ``(R, xi0, rho0, terms_used)``.

    The same ``(seed, initial_state, index)`` gives the same record as the
    batch sampler.
    """
    base = rng.stream_base(seed, rng.PURPOSE_BACKWARD, initial_state)
    out = kernels.backward(model.outcome_table, initial_state, base, index, 1, eps_trunc, min_terms, max_terms)
    return float(out["R"][0]), float(out["xi0"][0]), float(out["rho0"][0]), int(out["terms"][0])


def sample_r_forward(model: MmpModel, initial_state: int, seed: int, count: int = 1, burn_in: int = 10_000,
                     s0: float = 0.0, first_index: int = 0, backend=None):
    """``count`` forward-iteration samples ``S_burn_in`` started at ``s0``.

    Uses its own stream family, independent of the backward sampler.
    Returns ``(S, flags)``; non-finite runs are redrawn and flagged.
    """
    base = rng.stream_base(seed, rng.PURPOSE_FORWARD, initial_state)
    return kernels.forward(model.outcome_table, initial_state, base, first_index, count, burn_in, s0,
                           backend=backend)


def simulate_batch(model: MmpModel, n_per_state: int, seed: int, workers: int = 1,
                   eps_trunc: float = EPS_TRUNC, min_terms: int = MIN_TERMS, max_terms: int = MAX_TERMS,
                   backend=None, check_drift: bool = True) -> SampleBatch:
    """Backward samples for every initial state.

    Work is cut into fixed chunks of sample indices, so the result does not
    depend on ``workers``.  Raises ``DivergenceSuspected`` when more than
    0.1% of the samples of a state saw ``|Pi_n| > 1/eps`` before
    ``min_terms``.
    """
    if n_per_state < 0:
        raise ValueError("n_per_state must be >= 0")
    if check_drift:
        check_contraction(model)
    table = model.outcome_table
    S = model.n_states
    by_state = [StateSamples.empty(n_per_state) for _ in range(S)]
    jobs = []
    for x in range(S):
        base = rng.stream_base(seed, rng.PURPOSE_BACKWARD, x)
        s = by_state[x]
        for c0 in range(0, n_per_state, CHUNK):
            c1 = min(n_per_state, c0 + CHUNK)
            jobs.append((x, base, c0, c1, s))

    def run(job):
        x, base, c0, c1, s = job
        kernels.backward_into(table, x, base, c0, eps_trunc, min_terms, max_terms,
                              s.R[c0:c1], s.xi0[c0:c1], s.rho0[c0:c1], s.terms[c0:c1], s.flags[c0:c1],
                              backend=backend)

    if workers <= 1:
        for job in jobs:
            run(job)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, jobs))

    for x, s in enumerate(by_state):
        if len(s):
            frac = np.count_nonzero(s.flags & kernels.FLAG_DIVERGENT) / len(s)
            if frac > DIVERGENT_FRACTION:
                raise DivergenceSuspected(
                    f"state {x}: |Pi_n| exceeded 1/eps before min_terms on {frac:.2%} of samples"
                )
    return SampleBatch(by_state=by_state, eps_trunc=eps_trunc, min_terms=min_terms, max_terms=max_terms,
                       seed=seed, stats={"mean_terms": [float(s.terms.mean()) if len(s) else 0.0 for s in by_state]})


def write_csv(batch: SampleBatch, path) -> None:
    """Columns ``state,index,R,xi0,rho0,terms``; floats round-trip exactly."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for x, s in enumerate(batch.by_state):
            idx = np.arange(len(s))
            lines = (
                f"{x},{i},{r!r},{a!r},{b!r},{t}\n"
                for i, r, a, b, t in zip(idx.tolist(), s.R.tolist(), s.xi0.tolist(), s.rho0.tolist(),
                                         s.terms.tolist())
            )
            fh.writelines(lines)


def read_csv(path, n_states: int | None = None) -> SampleBatch:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header {header}")
        rows = list(reader)
    rec = np.empty(len(rows), dtype=BINARY_DTYPE)
    if rows:
        cols = list(zip(*rows))
        rec["state"] = np.array(cols[0], dtype=np.int64)
        rec["index"] = np.array(cols[1], dtype=np.int64)
        rec["R"] = np.array(cols[2], dtype=float)
        rec["xi0"] = np.array(cols[3], dtype=float)
        rec["rho0"] = np.array(cols[4], dtype=float)
        rec["terms"] = np.array(cols[5], dtype=np.int64)
        rec["flags"] = 0
    return SampleBatch.from_records(rec, n_states)


def write_binary(batch: SampleBatch, path) -> None:
    """``.npy`` file holding one structured array with ``BINARY_DTYPE``."""
    np.save(path, batch.to_records(), allow_pickle=False)


def read_binary(path, n_states: int | None = None) -> SampleBatch:
    rec = np.load(path, allow_pickle=False)
    if rec.dtype != BINARY_DTYPE:
        raise ValueError(f"unexpected record layout {rec.dtype}")
    return SampleBatch.from_records(rec, n_states)


def load_samples(path, n_states: int | None = None) -> SampleBatch:
    path = str(path)
    if path.endswith(".npy"):
        return read_binary(path, n_states)
    return read_csv(path, n_states)


def save_samples(batch: SampleBatch, path) -> None:
    path = str(path)
    if path.endswith(".npy"):
        write_binary(batch, path)
    else:
        write_csv(batch, path)
