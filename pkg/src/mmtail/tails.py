"""Tail estimates from samples of ``R`` and from the moment-difference formulas.

Conventions: ``eta`` is the sign (+1 for the right tail ``R > t``, -1 for the
left tail ``-R > t``); ``K_eta(x) = lim t^kappa P_x(eta R > t)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels, rng
from .errors import AssumptionViolation, NumericalFailure
from .montecarlo import EPS_TRUNC, MAX_TERMS, MIN_TERMS, SampleBatch

Z95 = 1.959963984540054
PLATEAU_LO_Q = 0.999
PLATEAU_HI_Q = 0.99999
MIN_EXCEEDANCES = 100
GRID_POINTS = 40


# ---------------------------------------------------------------- Hill

@dataclass
class HillResult:
    kappa: float
    k: int
    ci: tuple

    def to_dict(self):
        return {"kappa_hat": self.kappa, "k": self.k, "ci": list(self.ci)}


def default_hill_k(n: int) -> int:
    """``floor(n^(2/3))`` capped at 10^4."""
    return int(min(math.floor(n ** (2 / 3) + 1e-9), 10_000))


def hill_estimator(samples, k: int | None = None, z: float = Z95) -> HillResult:
    """Hill estimate from the ``k`` largest of ``samples`` (positive values).

    ``kappa_hat = k / sum_{i<=k} log(X_(i) / X_(k+1))`` on descending order
    statistics, with the normal-approximation interval
    ``kappa_hat * (1 +- z / sqrt(k))``.
    """
    x = np.asarray(samples, dtype=float)
    n = len(x)
    if k is None:
        k = default_hill_k(n)
    if not 2 <= k < n:
        raise ValueError(f"need 2 <= k < n, got k={k}, n={n}")
    if np.any(x <= 0):
        raise ValueError("Hill estimator needs positive samples")
    top = np.partition(x, n - k - 1)[n - k - 1:]
    threshold = top.min()
    denom = float(np.sum(np.log(top / threshold)))
    if not denom > 0:
        raise NumericalFailure("degenerate upper order statistics: all log-spacings are zero")
    kappa = k / denom
    half = z / math.sqrt(k)
    return HillResult(kappa=kappa, k=int(k), ci=(kappa * (1 - half), kappa * (1 + half)))


# ---------------------------------------------------------------- curves

def wilson_interval(count, n, z: float = Z95):
    """Wilson score interval for a binomial proportion (vectorized)."""
    count = np.asarray(count, dtype=float)
    if n == 0:
        return np.zeros_like(count), np.ones_like(count)
    p = count / n
    z2 = z * z
    denom = 1 + z2 / n
    centre = (p + z2 / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom
    return np.clip(centre - half, 0, 1), np.clip(centre + half, 0, 1)


def survival_counts(values, t_grid) -> np.ndarray:
    """``#{v > t}`` for every ``t`` in ``t_grid``."""
    v = np.sort(np.asarray(values, dtype=float))
    return len(v) - np.searchsorted(v, np.asarray(t_grid, dtype=float), side="right")


@dataclass
class Curve:
    state: int
    sign: int
    t: np.ndarray
    value: np.ndarray
    band_lo: np.ndarray
    band_hi: np.ndarray
    survival: np.ndarray
    n: int


def tail_curves(batch: SampleBatch, kappa: float, t_grid) -> list:
    """``t^kappa * P_x(eta R > t)`` per state and sign, with Wilson bands."""
    t = np.asarray(t_grid, dtype=float)
    if np.any(t <= 0) or np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must be positive and increasing")
    tk = t ** kappa
    out = []
    for x, s in enumerate(batch.by_state):
        n = len(s)
        for eta in (1, -1):
            cnt = survival_counts(eta * s.R, t)
            surv = cnt / n if n else np.zeros_like(t)
            lo, hi = wilson_interval(cnt, n)
            out.append(Curve(x, eta, t, tk * surv, tk * lo, tk * hi, surv, n))
    return out


def geometric_grid(lo: float, hi: float, points: int = GRID_POINTS) -> np.ndarray:
    return np.geomspace(lo, hi, points)


# ---------------------------------------------------------------- plateau

@dataclass
class Window:
    lo: float
    hi: float
    trimmed_to_period: bool = False

    @property
    def log_width(self) -> float:
        return math.log(self.hi / self.lo)


def plateau_window(abs_r, lo_q: float = PLATEAU_LO_Q, hi_q: float = PLATEAU_HI_Q,
                   min_exceedances: int = MIN_EXCEEDANCES, lattice_span: float | None = None):
    """Plateau window ``[q(lo_q), q(hi_q)]`` of ``|R|``.

    The upper end is lowered so at least ``min_exceedances`` samples lie
    above it.  For a lattice model (span ``alpha`` of ``log|rho|``)
    ``t^kappa P(R > t)`` oscillates with period ``alpha`` in ``log t``; the
    window is then trimmed to a whole number of periods so its log-average
    is the period average.  Returns ``None`` when no window exists (e.g.
    bounded samples).
    """
    a = np.asarray(abs_r, dtype=float)
    n = len(a)
    if n < min_exceedances + 2:
        return None
    hi_q = min(hi_q, 1 - min_exceedances / n)
    lo, hi = np.quantile(a, [lo_q, hi_q], method="inverted_cdf")
    if not (lo > 0 and hi > lo * (1 + 1e-9)):
        return None
    trimmed = False
    if lattice_span:
        periods = math.floor(math.log(hi / lo) / lattice_span + 1e-9)
        if periods >= 1:
            hi = lo * math.exp(periods * lattice_span)
            trimmed = True
    return Window(float(lo), float(hi), trimmed)


def _plateau_terms(values, kappa: float, win: Window) -> np.ndarray:
    """Per-sample ``(1/L) int_lo^hi t^kappa 1{v > t} dt/t`` with ``L = log(hi/lo)``.

    Its mean is the log-uniform average of ``t^kappa P(v > t)`` over the
    window, so the sample standard deviation gives an exact standard error.
    """
    v = np.minimum(np.asarray(values, dtype=float), win.hi)
    f = np.zeros(len(v))
    above = v > win.lo
    f[above] = (v[above] ** kappa - win.lo ** kappa) / (kappa * win.log_width)
    return f


@dataclass
class PlateauEstimate:
    state: int
    window: Window | None
    K: dict               # sign -> estimate
    se: dict              # sign -> standard error
    diff: float           # K_+1 - K_-1 from paired samples
    diff_se: float
    grid: np.ndarray | None = None
    curve: dict = field(default_factory=dict)     # sign -> t^kappa P(eta R > t) on grid
    curve_se: dict = field(default_factory=dict)

    def window_extremes(self, sign: int = 1):
        """``(max, min)`` of the curve over the window grid."""
        c = self.curve.get(sign)
        if c is None or not len(c):
            return 0.0, 0.0
        return float(c.max()), float(c.min())

    def abs_curve(self):
        return self.curve.get(0)


def plateau_constants(R, kappa: float, state: int = 0, window: Window | None = None,
                      lattice_span: float | None = None, points: int = GRID_POINTS) -> PlateauEstimate:
    """Plateau estimates of ``K_+1`` and ``K_-1`` for one initial state.

    Both signs share the window (chosen on ``|R|``), which makes the paired
    difference and its standard error available for the sign comparison.
    """
    R = np.asarray(R, dtype=float)
    n = len(R)
    if window is None:
        window = plateau_window(np.abs(R), lattice_span=lattice_span)
    if window is None:
        zero = {1: 0.0, -1: 0.0}
        return PlateauEstimate(state, None, dict(zero), dict(zero), 0.0, 0.0)
    fp = _plateau_terms(R, kappa, window)
    fm = _plateau_terms(-R, kappa, window)
    K = {1: float(fp.mean()), -1: float(fm.mean())}
    se = {1: float(fp.std(ddof=1) / math.sqrt(n)), -1: float(fm.std(ddof=1) / math.sqrt(n))}
    d = fp - fm
    grid = geometric_grid(window.lo, window.hi, points)
    tk = grid ** kappa
    curve, curve_se = {}, {}
    for sign, vals in ((1, R), (-1, -R), (0, np.abs(R))):
        p = survival_counts(vals, grid) / n
        curve[sign] = tk * p
        curve_se[sign] = tk * np.sqrt(p * (1 - p) / n)
    return PlateauEstimate(state, window, K, se, float(d.mean()), float(d.std(ddof=1) / math.sqrt(n)),
                           grid, curve, curve_se)


# ---------------------------------------------------------------- formulas

def _pow_diff(a, b, d, kappa):
    """``a^kappa - b^kappa`` for ``a, b >= 0`` given ``d = a - b`` exactly.

    Uses ``b^kappa * expm1(kappa * log1p(d / b))`` when ``a > b/2 > 0`` so
    the difference keeps full relative precision for large, close ``a, b``;
    elsewhere there is no cancellation and the direct form is used.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = np.asarray(d, dtype=float)
    direct = np.where(a > 0, a ** kappa, 0.0) - np.where(b > 0, b ** kappa, 0.0)
    close = (b > 0) & (a > 0.5 * b)
    with np.errstate(divide="ignore", invalid="ignore"):
        stable = b ** kappa * np.expm1(kappa * np.log1p(d / b))
    return np.where(close, stable, direct)


def _shifted(s):
    """``R - xi0`` for a state's samples."""
    return s.R - s.xi0


def positive_part_diff(R, xi0, sign: int, kappa: float) -> np.ndarray:
    """``((s R)^+)^kappa - ((s (R - xi0))^+)^kappa`` per sample."""
    a = sign * np.asarray(R, dtype=float)
    b = sign * (np.asarray(R, dtype=float) - np.asarray(xi0, dtype=float))
    ap = np.maximum(a, 0.0)
    bp = np.maximum(b, 0.0)
    both = (a > 0) & (b > 0)
    d = np.where(both, sign * np.asarray(xi0, dtype=float), ap - bp)
    return _pow_diff(ap, bp, d, kappa)


def abs_diff(R, xi0, kappa: float) -> np.ndarray:
    """``|R|^kappa - |R - xi0|^kappa`` per sample."""
    R = np.asarray(R, dtype=float)
    xi0 = np.asarray(xi0, dtype=float)
    b = R - xi0
    same = np.sign(R) == np.sign(b)
    d = np.where(same, np.sign(R) * xi0, np.abs(R) - np.abs(b))
    return _pow_diff(np.abs(R), np.abs(b), d, kappa)


@dataclass
class ConstantEstimate:
    K: dict        # sign -> per-state array
    se: dict       # sign -> per-state array
    branch: str

    def to_dict(self):
        return {
            "branch": self.branch,
            "K1": self.K[1].tolist(),
            "K1_se": self.se[1].tolist(),
            "K_1neg": self.K[-1].tolist(),
            "K_1neg_se": self.se[-1].tolist(),
        }


def _weighted(spectral, terms_by_state, n_by_state):
    """``sum_x pi_h(x)/h(x) * mean_x`` and its standard error."""
    w = spectral.pi_h / spectral.h
    means = np.array([t.mean() if len(t) else 0.0 for t in terms_by_state])
    ses = np.array([t.std(ddof=1) / math.sqrt(len(t)) if len(t) > 1 else 0.0 for t in terms_by_state])
    return float(w @ means), float(math.sqrt(np.sum((w * ses) ** 2)))


def goldie_constant_positive(model, spectral, batch: SampleBatch) -> ConstantEstimate:
    """``K(z) = h(z)/(a kappa) * sum_x pi_h(x)/h(x) * E_x[R^kappa - (R - xi0)^kappa]``.

    Only for models whose atoms all have ``xi > 0`` and ``rho > 0``; the
    expectation is a sample mean over paired ``(R, xi0)``.
    """
    for i, j, xi, rho, w in model.iter_atoms():
        if not (xi > 0 and rho > 0):
            raise AssumptionViolation(
                f"regime violation: atom (xi={xi}, rho={rho}) on edge {i}->{j} is not positive"
            )
    kappa, a = spectral.kappa, spectral.drift
    terms = [positive_part_diff(s.R, s.xi0, 1, kappa) for s in batch.by_state]
    m, se = _weighted(spectral, terms, None)
    scale = spectral.h / (a * kappa)
    S = model.n_states
    return ConstantEstimate(
        K={1: scale * m, -1: np.zeros(S)},
        se={1: scale * se, -1: np.zeros(S)},
        branch="positive",
    )


def goldie_constant_mixed(model, spectral, structure, batch: SampleBatch) -> ConstantEstimate:
    """Constants for coefficients of either sign.

    With the sign condition::

        K_1(z) = K_-1(z) = h(z)/(2 a kappa) * sum_x pi_h(x)/h(x) E_x[|R|^kappa - |R - xi0|^kappa]

    Without it, with the partition ``(A_1, A_-1)`` and ``z`` in ``A_g``::

        K_eta(z) = h(z)/(a kappa) * ( sum_{x in A_1}  pi_h(x)/h(x) E_x[D_{eta g}]
                                    + sum_{x in A_-1} pi_h(x)/h(x) E_x[D_{-eta g}] )

    where ``D_s = ((s R)^+)^kappa - ((s (R - xi0))^+)^kappa``.  With all
    coefficients positive (``A_1`` = all states) this reduces to
    ``goldie_constant_positive``.
    """
    kappa, a = spectral.kappa, spectral.drift
    S = model.n_states
    h = spectral.h
    if structure.condition_g:
        terms = [abs_diff(s.R, s.xi0, kappa) for s in batch.by_state]
        m, se = _weighted(spectral, terms, None)
        K = h * m / (2 * a * kappa)
        err = h * se / (2 * a * kappa)
        return ConstantEstimate(K={1: K, -1: K.copy()}, se={1: err, -1: err.copy()}, branch="mixed-G")
    a_plus = set(structure.partition[0])
    # per-state sign of the layer: +1 on A_1, -1 on A_-1
    layer = np.array([1 if x in a_plus else -1 for x in range(S)])
    D = {sgn: [positive_part_diff(s.R, s.xi0, sgn, kappa) for s in batch.by_state] for sgn in (1, -1)}
    K = {1: np.zeros(S), -1: np.zeros(S)}
    se = {1: np.zeros(S), -1: np.zeros(S)}
    for eta in (1, -1):
        for g in (1, -1):
            # D_{eta g} on A_1, D_{-eta g} on A_-1, i.e. D_{eta g layer(x)} at x
            terms = [D[eta * g * layer[x]][x] for x in range(S)]
            m, e = _weighted(spectral, terms, None)
            sel = layer == g
            K[eta][sel] = h[sel] * m / (a * kappa)
            se[eta][sel] = h[sel] * e / (a * kappa)
    return ConstantEstimate(K=K, se=se, branch="mixed-nonG")


def goldie_constants(model, spectral, structure, batch) -> ConstantEstimate:
    """Positive formula when every atom is positive, the mixed one otherwise."""
    if all(xi > 0 and rho > 0 for _, _, xi, rho, _ in model.iter_atoms()):
        return goldie_constant_positive(model, spectral, batch)
    return goldie_constant_mixed(model, spectral, structure, batch)


# ---------------------------------------------------------------- medians

def median_gamma(batch: SampleBatch) -> np.ndarray:
    """Lower sample median per state: ``inf{a : F_n(a) > 1/2}``."""
    out = np.empty(len(batch.by_state))
    for x, s in enumerate(batch.by_state):
        if not len(s):
            raise ValueError(f"state {x} has no samples")
        n = len(s)
        out[x] = np.partition(s.R, n // 2)[n // 2]
    return out


# ---------------------------------------------------------------- symmetrization

@dataclass
class SymmetrizationRow:
    state: int
    t: float
    lhs: float
    rhs_half: float
    se: float
    passed: bool

    def to_dict(self):
        return {"state": self.state, "t": self.t, "lhs": self.lhs, "rhs_half": self.rhs_half,
                "se": self.se, "pass": self.passed}


def symmetrization_check(model, gamma, t_grid, n: int, seed: int, eps_trunc: float = EPS_TRUNC,
                         min_terms: int = MIN_TERMS, max_terms: int = MAX_TERMS, states=None,
                         backend=None, rel_tol: float = 1e-9) -> list:
    """Check ``P_z(|R| >= t) >= 1/2 P_z(sup_n |R_n + Gamma(x_{n-1}) Pi_n| > t)``.

    Both sides come from ``n`` fresh paths per state (own stream family),
    the supremum running over the terms the backward series uses, starting
    with ``n = 0`` (value ``|Gamma(z)|``).  A grid point passes when
    ``lhs >= rhs/2 - 3 SE`` with SE of the paired per-path difference.
    ``t_grid`` is either one grid or a per-state list of grids.

    Values within ``rel_tol`` of ``t`` count as ties: ``|R| >= t(1 - rel_tol)``
    on the left and ``sup > t(1 + rel_tol)`` on the right.  Without this a
    point mass at ``t`` (degenerate models, ``R = Gamma``) is decided by
    rounding in the series.
    """
    gamma = np.asarray(gamma, dtype=float)
    table = model.outcome_table
    rows = []
    states = range(model.n_states) if states is None else states
    for z in states:
        grid = t_grid[z] if isinstance(t_grid, (list, tuple)) and np.ndim(t_grid[0]) else t_grid
        base = rng.stream_base(seed, rng.PURPOSE_SYMMETRIZATION, z)
        out = kernels.backward(table, z, base, 0, n, eps_trunc, min_terms, max_terms, gamma=gamma,
                               backend=backend)
        absr = np.abs(out["R"])
        sup = out["sup"]
        for t in np.asarray(grid, dtype=float):
            left = (absr >= t * (1 - rel_tol)).astype(float)
            right = 0.5 * (sup > t * (1 + rel_tol))
            d = left - right
            se = float(d.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
            lhs, rh = float(left.mean()), float(right.mean())
            rows.append(SymmetrizationRow(z, float(t), lhs, rh, se, bool(lhs >= rh - 3 * se)))
    return rows


# ---------------------------------------------------------------- report

@dataclass
class TailReport:
    kappa: float
    hill: HillResult | None
    hill_by_state: list
    curves: list
    plateau: list
    constants: ConstantEstimate | None
    medians: np.ndarray
    symmetrization: list

    def bounds_check(self) -> list:
        out = []
        for p in self.plateau:
            mx, mn = p.window_extremes(0)
            out.append({"state": p.state, "window": None if p.window is None else [p.window.lo, p.window.hi],
                        "max": mx, "min": mn})
        return out

    def constants_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "hill": None if self.hill is None else self.hill.to_dict(),
            "hill_by_state": [None if h is None else h.to_dict() for h in self.hill_by_state],
            "plateau": [
                {
                    "state": p.state,
                    "window": None if p.window is None else
                    {"lo": p.window.lo, "hi": p.window.hi, "trimmed_to_period": p.window.trimmed_to_period},
                    "K1": p.K[1], "K1_se": p.se[1], "K_1neg": p.K[-1], "K_1neg_se": p.se[-1],
                    "diff": p.diff, "diff_se": p.diff_se,
                }
                for p in self.plateau
            ],
            "formula": None if self.constants is None else self.constants.to_dict(),
            "medians": [float(m) for m in self.medians],
            "bounds_check": self.bounds_check(),
            "symmetrization": [r.to_dict() for r in self.symmetrization],
        }

    def curve_rows(self):
        for c in self.curves:
            for t, v, lo, hi in zip(c.t, c.value, c.band_lo, c.band_hi):
                yield c.state, c.sign, float(t), float(v), float(lo), float(hi)


def _hill_or_none(values, k=None):
    v = np.abs(np.asarray(values, dtype=float))
    v = v[v > 0]
    try:
        kk = k if k is not None else default_hill_k(len(v))
        return hill_estimator(v, min(kk, len(v) - 1))
    except (ValueError, NumericalFailure):
        return None


def default_t_grid(batch: SampleBatch, points: int = GRID_POINTS) -> np.ndarray:
    """Geometric grid from the median to the 0.99999 quantile of pooled ``|R|``."""
    pooled = np.abs(np.concatenate([s.R for s in batch.by_state]))
    lo, hi = np.quantile(pooled, [0.5, PLATEAU_HI_Q])
    lo = max(lo, 1e-12)
    if not hi > lo:
        hi = lo * 10
    return np.geomspace(lo, hi, points)


def symmetrization_grid(batch: SampleBatch) -> list:
    """Per-state grid at the 0.5, 0.9, 0.99 and 0.999 quantiles of ``|R|``."""
    grids = []
    for s in batch.by_state:
        q = np.quantile(np.abs(s.R), [0.5, 0.9, 0.99, 0.999])
        grids.append(np.unique(q[q > 0]))
    return grids


def tail_report(model, batch: SampleBatch, spectral=None, structure=None, kappa: float | None = None,
                t_grid=None, hill_k: int | None = None, symmetrization_samples: int | None = None,
                seed: int = 0, skip_constants: bool = False) -> TailReport:
    """Hill, curves, plateau and formula constants, medians and the
    symmetrization table for one batch."""
    if kappa is None:
        if spectral is None:
            raise ValueError("need kappa or a spectral analysis")
        kappa = spectral.kappa
    degenerate = structure is not None and structure.degenerate
    pooled = np.concatenate([s.R for s in batch.by_state])
    # a degenerate model has bounded R: the Hill estimate would only see rounding noise
    hill = None if degenerate else _hill_or_none(pooled, hill_k)
    hill_by_state = [None if degenerate else _hill_or_none(s.R, hill_k) for s in batch.by_state]
    if t_grid is None:
        t_grid = default_t_grid(batch)
    curves = tail_curves(batch, kappa, t_grid)
    span = structure.alpha if (structure is not None and structure.arithmetic and structure.alpha) else None
    plateau = [plateau_constants(s.R, kappa, x, lattice_span=span) for x, s in enumerate(batch.by_state)]
    constants = None
    if not skip_constants and spectral is not None and structure is not None:
        constants = goldie_constants(model, spectral, structure, batch)
    medians = median_gamma(batch)
    sym = []
    if symmetrization_samples:
        sym = symmetrization_check(model, medians, symmetrization_grid(batch), symmetrization_samples, seed,
                                   eps_trunc=batch.eps_trunc or EPS_TRUNC, min_terms=batch.min_terms or MIN_TERMS,
                                   max_terms=batch.max_terms or MAX_TERMS)
    return TailReport(kappa, hill, hill_by_state, curves, plateau, constants, medians, sym)
