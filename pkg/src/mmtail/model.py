"""Finite-state Markov-modulated coefficient processes.

A model is a transition matrix ``H`` on ``S`` states together with, for every
positive-probability edge ``(i, j)``, a finite joint law of the coefficient
pair ``(xi, rho)`` drawn when the chain moves from ``i`` to ``j``.  The
stationary solution studied by the rest of the package is

    R = xi_0 + sum_{n>=1} xi_n * rho_0 * ... * rho_{n-1}

with the path started from a fixed state ``x_{-1}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import NumericalFailure

ROW_SUM_TOL = 1e-12
WEIGHT_SUM_TOL = 1e-12
STATIONARY_RESIDUAL = 1e-12
DENSE_SOLVE_MAX_STATES = 64


@dataclass(frozen=True)
class EdgeLaw:
    """Atoms of the coefficient law attached to one edge."""

    xi: np.ndarray
    rho: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        for name in ("xi", "rho", "w"):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (len(self.xi) == len(self.rho) == len(self.w)):
            raise ValueError("xi, rho and w must have equal length")

    def __len__(self):
        return len(self.w)


@dataclass(frozen=True)
class OutcomeTable:
    """Flattened per-row sampling table used by the kernels.

    Row ``i`` owns outcomes ``start[i]:start[i+1]``; each outcome is a joint
    draw of the next state and one atom, with probability ``H[i, j] * w_k``.
    ``cum`` holds the per-row cumulative probabilities (last entry of a row
    is exactly 1).
    """

    start: np.ndarray
    cum: np.ndarray
    nxt: np.ndarray
    xi: np.ndarray
    rho: np.ndarray


@dataclass(frozen=True)
class MmpModel:
    """Markov chain plus per-edge coefficient laws.

    Parameters
    ----------
    states : sequence of str
        State labels, in index order.
    transition : (S, S) array
        Transition probabilities ``H[i, j]``.
    atoms : mapping ``(i, j) -> EdgeLaw``
        Coefficient law of each positive-probability edge.
    c_xi, c_rho : float
        Ellipticity bounds: ``|xi| < c_xi`` and ``1/c_rho < |rho| < c_rho``.
    """

    states: tuple
    transition: np.ndarray
    atoms: Mapping[tuple, EdgeLaw]
    c_xi: float
    c_rho: float

    def __post_init__(self):
        H = np.array(self.transition, dtype=float)
        H.setflags(write=False)
        object.__setattr__(self, "transition", H)
        object.__setattr__(self, "states", tuple(str(s) for s in self.states))
        object.__setattr__(
            self, "atoms", {(int(i), int(j)): law for (i, j), law in self.atoms.items()}
        )

    @classmethod
    def build(cls, states: Sequence[str], edges: Mapping[tuple, tuple], c_xi: float, c_rho: float):
        """Build a model from ``{(i, j): (prob, [(xi, rho, w), ...])}``."""
        n = len(states)
        H = np.zeros((n, n))
        atoms = {}
        for (i, j), (prob, atom_list) in edges.items():
            H[i, j] = prob
            arr = np.array(atom_list, dtype=float).reshape(-1, 3)
            atoms[(i, j)] = EdgeLaw(arr[:, 0], arr[:, 1], arr[:, 2])
        return cls(tuple(states), H, atoms, float(c_xi), float(c_rho))

    @property
    def n_states(self) -> int:
        return len(self.states)

    def edges(self) -> list[tuple[int, int]]:
        """Positive-probability edges in row-major order."""
        rows, cols = np.nonzero(self.transition > 0)
        return list(zip(rows.tolist(), cols.tolist()))

    def edge_law(self, i: int, j: int) -> EdgeLaw:
        """Coefficient law of edge ``i -> j``; reading a zero edge is an error."""
        if self.transition[i, j] <= 0:
            raise KeyError(f"edge {i}->{j} has zero probability and carries no coefficient law")
        try:
            return self.atoms[(i, j)]
        except KeyError:
            raise KeyError(f"edge {i}->{j} has no coefficient law") from None

    def iter_atoms(self) -> Iterable[tuple[int, int, float, float, float]]:
        """Yield ``(i, j, xi, rho, w)`` for every atom of every positive edge."""
        for i, j in self.edges():
            law = self.edge_law(i, j)
            for xi, rho, w in zip(law.xi, law.rho, law.w):
                yield i, j, float(xi), float(rho), float(w)

    def map_rho(self, fn) -> "MmpModel":
        """Copy of the model with every ``rho`` atom replaced by ``fn(rho)``."""
        atoms = {e: EdgeLaw(law.xi, fn(np.asarray(law.rho)), law.w) for e, law in self.atoms.items()}
        return MmpModel(self.states, self.transition, atoms, self.c_xi, self.c_rho)

    @cached_property
    def outcome_table(self) -> OutcomeTable:
        S = self.n_states
        start = np.zeros(S + 1, dtype=np.int64)
        cum, nxt, xis, rhos = [], [], [], []
        for i in range(S):
            probs = []
            for j in np.nonzero(self.transition[i] > 0)[0]:
                law = self.edge_law(i, int(j))
                for xi, rho, w in zip(law.xi, law.rho, law.w):
                    if w <= 0:
                        continue
                    probs.append(self.transition[i, j] * w)
                    nxt.append(int(j))
                    xis.append(xi)
                    rhos.append(rho)
            c = np.cumsum(probs)
            c /= c[-1]
            c[-1] = 1.0
            cum.extend(c.tolist())
            start[i + 1] = start[i] + len(probs)
        table = OutcomeTable(
            start=start,
            cum=np.array(cum, dtype=float),
            nxt=np.array(nxt, dtype=np.int64),
            xi=np.array(xis, dtype=float),
            rho=np.array(rhos, dtype=float),
        )
        for arr in (table.start, table.cum, table.nxt, table.xi, table.rho):
            arr.setflags(write=False)
        return table


@dataclass(frozen=True)
class Violation:
    kind: str
    location: tuple
    message: str


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def __str__(self):
        if self.ok:
            return "ok"
        return "\n".join(f"{v.kind} at {v.location}: {v.message}" for v in self.violations)


def _strongly_connected(adj: np.ndarray) -> bool:
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import connected_components

    n, _ = connected_components(csr_matrix(adj.astype(np.int8)), directed=True, connection="strong")
    return n == 1


def validate(model: MmpModel) -> ValidationReport:
    """Collect every violated model invariant; an empty report means valid."""
    out = []
    H = model.transition
    S = model.n_states
    if H.shape != (S, S):
        out.append(Violation("shape", (), f"transition has shape {H.shape}, expected {(S, S)}"))
        return ValidationReport(out)
    if not np.all(np.isfinite(H)) or np.any(H < 0):
        bad = np.argwhere(~np.isfinite(H) | (H < 0))
        for i, j in bad:
            out.append(Violation("probability", (int(i), int(j)), f"invalid entry {H[i, j]}"))
    for i in range(S):
        s = H[i].sum()
        if abs(s - 1.0) > ROW_SUM_TOL:
            out.append(Violation("row sum", (i,), f"row sums to {s!r}"))
    if not model.c_xi > 0:
        out.append(Violation("bounds", (), f"c_xi must be > 0, got {model.c_xi}"))
    if not model.c_rho > 1:
        out.append(Violation("bounds", (), f"c_rho must be > 1, got {model.c_rho}"))

    for (i, j), law in sorted(model.atoms.items()):
        if not (0 <= i < S and 0 <= j < S):
            out.append(Violation("edge", (i, j), "edge index out of range"))
            continue
        if H[i, j] <= 0:
            out.append(Violation("zero edge law", (i, j), "zero-probability edge carries atoms"))
            continue
        if len(law) == 0:
            out.append(Violation("weight sum", (i, j), "edge has no atoms"))
            continue
        if np.any(law.w < 0) or abs(law.w.sum() - 1.0) > WEIGHT_SUM_TOL:
            out.append(Violation("weight sum", (i, j), f"atom weights sum to {law.w.sum()!r}"))
        for k, (xi, rho) in enumerate(zip(law.xi, law.rho)):
            if not abs(xi) < model.c_xi:
                out.append(Violation("ellipticity", (i, j, k), f"|xi|={abs(xi)} not < c_xi={model.c_xi}"))
            if not (1.0 / model.c_rho < abs(rho) < model.c_rho):
                out.append(
                    Violation("ellipticity", (i, j, k), f"|rho|={abs(rho)} outside ({1 / model.c_rho}, {model.c_rho})")
                )
    for i, j in zip(*np.nonzero(H > 0)):
        if (int(i), int(j)) not in model.atoms:
            out.append(Violation("missing law", (int(i), int(j)), "positive edge has no coefficient law"))
    if S > 0 and H.shape == (S, S) and not _strongly_connected(H > 0):
        out.append(Violation("irreducibility", (), "transition graph is not strongly connected"))
    return ValidationReport(out)


def stationary_distribution(model_or_matrix, tol: float = STATIONARY_RESIDUAL, max_iter: int = 1_000_000) -> np.ndarray:
    """Stationary law ``pi`` of an irreducible stochastic matrix.

    Dense linear solve up to 64 states, lazy-chain power iteration above.
    Either route must reach ``||pi H - pi||_inf <= tol``.
    """
    H = model_or_matrix.transition if isinstance(model_or_matrix, MmpModel) else np.asarray(model_or_matrix, float)
    S = H.shape[0]
    if S <= DENSE_SOLVE_MAX_STATES:
        A = H.T - np.eye(S)
        A[-1, :] = 1.0
        b = np.zeros(S)
        b[-1] = 1.0
        pi = np.linalg.solve(A, b)
    else:
        # (H + I)/2 has the same stationary law and no rotation on periodic chains
        lazy = 0.5 * (H + np.eye(S))
        pi = np.full(S, 1.0 / S)
        for _ in range(max_iter):
            nxt = pi @ lazy
            nxt /= nxt.sum()
            if np.max(np.abs(nxt @ H - nxt)) <= tol:
                pi = nxt
                break
            pi = nxt
        else:
            raise NumericalFailure("stationary distribution: power iteration did not converge")
    pi = pi / pi.sum()
    resid = np.max(np.abs(pi @ H - pi))
    if resid > tol or np.any(pi <= 0):
        raise NumericalFailure(f"stationary distribution residual {resid:.3e} (or nonpositive mass)")
    return pi


@dataclass(frozen=True)
class PathSample:
    """A path ``x_{-1}, x_0, ..., x_{n-1}`` with coefficients ``(xi_k, rho_k)``.

    ``states[0]`` is the initial state ``x_{-1}``; the pair ``(xi[k], rho[k])``
    belongs to the move ``states[k] -> states[k+1]``.
    """

    states: np.ndarray
    xi: np.ndarray
    rho: np.ndarray

    def __len__(self):
        return len(self.xi)


def sample_path(model: MmpModel, initial_state: int, length: int, seed: int, stream: int = 0) -> PathSample:
    """Draw a path of ``length`` moves from ``initial_state``.

    Deterministic in ``(seed, initial_state, stream, length)``; a longer path
    with the same arguments extends a shorter one.
    """
    from . import kernels, rng

    if length < 1:
        raise ValueError("length must be >= 1")
    table = model.outcome_table
    key = rng.sample_key(rng.stream_base(seed, rng.PURPOSE_PATH, initial_state), stream)
    idx = kernels.path_outcomes(table, initial_state, key, length)
    states = np.empty(length + 1, dtype=np.int64)
    states[0] = initial_state
    states[1:] = table.nxt[idx]
    return PathSample(states=states, xi=table.xi[idx].copy(), rho=table.rho[idx].copy())
