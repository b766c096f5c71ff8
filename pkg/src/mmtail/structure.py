"""Structural checks on the transition graph and coefficient atoms.

* period and cyclic classes of the driving chain,
* the sign condition (Condition G) via the sign-augmented chain on
  ``S x {-1, +1}``,
* degeneracy: existence of ``Gamma`` with ``xi + Gamma(to) rho = Gamma(from)``
  for every atom,
* lattice (arithmetic) structure of ``log|rho|`` along the augmented chain.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .model import MmpModel

DEGENERACY_TOL = 1e-9
LATTICE_TOL = 1e-9


def period_and_classes(model: MmpModel):
    """Period ``d`` of the transition graph and its ``d`` cyclic classes.

    BFS levels from state 0; ``d`` is the gcd of ``level(i) + 1 - level(j)``
    over all edges, and class ``k`` holds the states with level ``= k mod d``.
    """
    S = model.n_states
    adj = [[] for _ in range(S)]
    for i, j in model.edges():
        adj[i].append(j)
    level = [-1] * S
    level[0] = 0
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for j in adj[i]:
            if level[j] < 0:
                level[j] = level[i] + 1
                queue.append(j)
    d = 0
    for i, j in model.edges():
        d = math.gcd(d, abs(level[i] + 1 - level[j]))
    d = max(d, 1)
    classes = [[x for x in range(S) if level[x] % d == k] for k in range(d)]
    return d, classes


def _augmented_edges(model: MmpModel):
    """Edges ``((x, eta), (y, eta * sign(rho)), log|rho|)`` with node index
    ``x`` for ``eta = +1`` and ``x + S`` for ``eta = -1``."""
    S = model.n_states
    out = []
    for i, j, _xi, rho, _w in model.iter_atoms():
        flip = rho < 0
        q = math.log(abs(rho))
        out.append((i, j + S if flip else j, q))
        out.append((i + S, j if flip else j + S, q))
    return out


def augmented_components(model: MmpModel):
    """Strong components of the sign-augmented chain: ``(count, labels)``
    with ``labels[x]`` for ``(x, +1)`` and ``labels[x + S]`` for ``(x, -1)``."""
    S = model.n_states
    edges = _augmented_edges(model)
    rows = [a for a, _, _ in edges]
    cols = [b for _, b, _ in edges]
    g = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(2 * S, 2 * S))
    n, labels = connected_components(g, directed=True, connection="strong")
    return int(n), labels


def partition_satisfies_g_identities(model: MmpModel, a_plus) -> bool:
    """True if the partition ``(A_1, A_-1)`` with ``A_1 = a_plus`` makes both
    sign identities hold: no ``rho > 0`` atom crosses between the sets and no
    ``rho < 0`` atom stays within one."""
    a_plus = set(a_plus)
    for i, j, _xi, rho, w in model.iter_atoms():
        if w <= 0:
            continue
        same = (i in a_plus) == (j in a_plus)
        if same and rho < 0:
            return False
        if not same and rho > 0:
            return False
    return True


def check_condition_g(model: MmpModel):
    """``(holds, partition)``.

    The condition holds iff the augmented chain is one strong component.
    Otherwise ``partition = (A_1, A_-1)``, ``A_1`` being the states whose
    ``+1`` copy shares a component with ``(0, +1)``.
    """
    S = model.n_states
    n, labels = augmented_components(model)
    if n == 1:
        return True, None
    a_plus = [x for x in range(S) if labels[x] == labels[0]]
    a_minus = [x for x in range(S) if labels[x] != labels[0]]
    if not partition_satisfies_g_identities(model, a_plus):
        raise AssertionError("augmented components gave a partition violating the sign identities")
    return False, (a_plus, a_minus)


def check_degeneracy(model: MmpModel, tol: float = DEGENERACY_TOL):
    """``(degenerate, gamma)``.

    Writes ``Gamma(x) = a(x) + b(x) t`` with ``Gamma(0) = t``, propagating
    over a spanning tree of the (undirected) transition graph.  Every atom
    then gives a linear equation ``c0 + c1 t = 0``; ``t`` is solved from the
    equation with the largest ``|c1|`` and all atoms are rechecked.
    """
    S = model.n_states
    nbrs = [[] for _ in range(S)]
    for i, j in model.edges():
        law = model.edge_law(i, j)
        nbrs[i].append((j, law.xi[0], law.rho[0], "fwd"))
        nbrs[j].append((i, law.xi[0], law.rho[0], "back"))
    a = np.full(S, np.nan)
    b = np.full(S, np.nan)
    a[0], b[0] = 0.0, 1.0
    queue = deque([0])
    while queue:
        x = queue.popleft()
        for y, xi, rho, kind in nbrs[x]:
            if not np.isnan(a[y]):
                continue
            if kind == "fwd":
                # x -> y: Gamma(x) = xi + rho Gamma(y)
                a[y], b[y] = (a[x] - xi) / rho, b[x] / rho
            else:
                # y -> x: Gamma(y) = xi + rho Gamma(x)
                a[y], b[y] = xi + rho * a[x], rho * b[x]
            queue.append(y)
    constraints = []
    for i, j, xi, rho, w in model.iter_atoms():
        constraints.append((a[i] - xi - rho * a[j], b[i] - rho * b[j]))
    scale = max(1.0, float(np.max(np.abs(b))))
    c0, c1 = max(constraints, key=lambda c: abs(c[1]))
    t = -c0 / c1 if abs(c1) > 1e-12 * scale else 0.0
    gamma = a + b * t
    for i, j, xi, rho, w in model.iter_atoms():
        if abs(xi + gamma[j] * rho - gamma[i]) > tol:
            return False, None
    return True, gamma


def _real_gcd(values, tol):
    g = 0.0
    for v in values:
        a, b = max(g, v), min(g, v)
        while b > tol:
            a, b = b, math.fmod(a, b)
        g = a
    return g


def _lattice_verdict(residuals, tol):
    mags = sorted((abs(r) for r in residuals if abs(r) > tol), reverse=True)
    if not mags:
        return True, 0.0
    alpha = _real_gcd(mags, tol)
    # a gcd that collapsed towards the cutoff means incommensurable residuals
    if alpha < math.sqrt(tol) * mags[0]:
        return False, None
    for r in mags:
        k = round(r / alpha)
        if abs(r - k * alpha) > tol * max(1.0, k):
            return False, None
    return True, alpha


def check_arithmetic(model: MmpModel, tol: float = LATTICE_TOL):
    """Lattice check on ``log|rho|`` along the augmented chain.

    Tree potentials ``beta`` are assigned over a BFS forest of the augmented
    graph with ``beta(to) = beta(from) - log|rho|``; every atom then has a
    residual ``log|rho| - beta(from) + beta(to)`` (zero on tree edges).  The
    model is arithmetic with span ``alpha`` iff all residuals lie in
    ``alpha * Z``; ``alpha`` comes from an approximate real gcd with cutoff
    ``tol``.

    Returns
    -------
    dict with keys ``arithmetic``, ``alpha``, ``shift`` (``{(x, eta): beta mod alpha}``
    when arithmetic), ``flags`` (``"degenerate-lattice"``, ``"fragile"``) and
    ``residuals``.
    """
    S = model.n_states
    edges = _augmented_edges(model)
    out = [[] for _ in range(2 * S)]
    for k, (u, v, q) in enumerate(edges):
        out[u].append((v, q))
        out[v].append((u, -q))
    pot = [None] * (2 * S)
    for root in range(2 * S):
        if pot[root] is not None:
            continue
        pot[root] = 0.0
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for v, q in out[u]:
                if pot[v] is None:
                    pot[v] = pot[u] - q
                    queue.append(v)
    residuals = [q - pot[u] + pot[v] for u, v, q in edges]
    arithmetic, alpha = _lattice_verdict(residuals, tol)
    flags = []
    if arithmetic and alpha == 0.0:
        flags.append("degenerate-lattice")
    for factor in (1e-3, 1e3):
        if _lattice_verdict(residuals, tol * factor)[0] != arithmetic:
            flags.append("fragile")
            break
    shift = None
    if arithmetic:
        shift = {}
        for node in range(2 * S):
            x, eta = (node, 1) if node < S else (node - S, -1)
            shift[(x, eta)] = pot[node] % alpha if alpha > 0 else pot[node]
    return {
        "arithmetic": arithmetic,
        "alpha": alpha,
        "shift": shift,
        "flags": flags,
        "residuals": residuals,
    }


@dataclass
class StructureReport:
    period: int
    classes: list
    condition_g: bool
    partition: tuple | None
    augmented_components: list
    degenerate: bool
    gamma: np.ndarray | None
    arithmetic: bool
    alpha: float | None
    shift: dict | None
    lattice_flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "period": self.period,
            "classes": self.classes,
            "condition_g": self.condition_g,
            "partition": None if self.partition is None else
            {"A_plus": self.partition[0], "A_minus": self.partition[1]},
            "augmented_components": self.augmented_components,
            "degenerate": self.degenerate,
            "gamma": None if self.gamma is None else [float(g) for g in self.gamma],
            "arithmetic": self.arithmetic,
            "alpha": self.alpha,
            "shift": None if self.shift is None else
            [{"state": x, "sign": eta, "beta": b} for (x, eta), b in sorted(self.shift.items())],
            "lattice_flags": self.lattice_flags,
        }

    def summary_lines(self) -> list:
        lines = [f"period: {self.period}"]
        if self.condition_g:
            lines.append("condition G: holds")
        else:
            lines.append(f"condition G: fails (A+ = {self.partition[0]}, A- = {self.partition[1]})")
        if self.degenerate:
            lines.append("degenerate: yes (Gamma = " + ", ".join(f"{g:.12g}" for g in self.gamma) + ")")
        else:
            lines.append("degenerate: no")
        if self.arithmetic:
            extra = f" [{', '.join(self.lattice_flags)}]" if self.lattice_flags else ""
            lines.append(f"arithmetic: yes (alpha = {self.alpha:.12g}){extra}")
        else:
            extra = " [fragile]" if "fragile" in self.lattice_flags else ""
            lines.append(f"arithmetic: no{extra}")
        return lines


def analyze_structure(model: MmpModel, degeneracy_tol: float = DEGENERACY_TOL,
                      lattice_tol: float = LATTICE_TOL) -> StructureReport:
    d, classes = period_and_classes(model)
    holds, partition = check_condition_g(model)
    _, labels = augmented_components(model)
    degenerate, gamma = check_degeneracy(model, degeneracy_tol)
    lat = check_arithmetic(model, lattice_tol)
    return StructureReport(
        period=d,
        classes=classes,
        condition_g=holds,
        partition=partition,
        augmented_components=[int(c) for c in labels],
        degenerate=degenerate,
        gamma=gamma,
        arithmetic=lat["arithmetic"],
        alpha=lat["alpha"],
        shift=lat["shift"],
        lattice_flags=lat["flags"],
    )
