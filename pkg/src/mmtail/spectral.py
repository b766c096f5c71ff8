"""Weighted transfer matrices, the growth rate Lambda(beta), the tail index
kappa and the exponentially tilted chain.

For a model with transition matrix ``H`` the weighted matrix is

    H_beta[i, j] = H[i, j] * sum_k w_k |rho_k|^beta        (atoms of edge i->j)

and ``Lambda(beta) = log r(H_beta)`` with ``r`` the Perron root.  The tail
index ``kappa > 0`` solves ``Lambda(kappa) = 0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AssumptionViolation, NumericalFailure
from .model import MmpModel, stationary_distribution

SPECTRAL_TOL = 1e-12
KAPPA_TOL = 1e-10
BETA_MAX = 64.0
MAX_ITER = 200_000


def build_kernel_beta(model: MmpModel, beta: float) -> np.ndarray:
    """``H_beta``: transition probabilities times the edge moment ``E|rho|^beta``."""
    if beta < 0:
        raise ValueError("beta must be non-negative")
    S = model.n_states
    K = np.zeros((S, S))
    for i, j in model.edges():
        law = model.edge_law(i, j)
        if beta == 0:
            moment = float(np.sum(law.w))
        else:
            moment = float(np.sum(law.w * np.abs(law.rho) ** beta))
        K[i, j] = model.transition[i, j] * moment
    return K


def spectral_radius(matrix, tol: float = SPECTRAL_TOL, max_iter: int = MAX_ITER, v0=None):
    """Perron root and positive eigenvector of an irreducible nonnegative matrix.

    Power iteration on ``M / s + I`` (``s`` the largest row sum); the identity
    shift removes the rotating eigenvalues of periodic matrices.  Stops when
    the Collatz-Wielandt bounds ``min_i (Mv)_i / v_i <= r <= max_i (Mv)_i / v_i``
    are within ``tol`` relative, so on return ``||Mv - r v||_inf <= tol * r``
    with ``max(v) = 1``.

    Returns
    -------
    r : float
    v : ndarray, strictly positive, ``max(v) == 1``
    """
    M = np.asarray(matrix, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    if np.any(M < 0):
        raise ValueError("matrix must be nonnegative")
    s = M.sum(axis=1).max()
    if not s > 0:
        raise NumericalFailure("spectral radius: zero matrix")
    v = np.ones(M.shape[0]) if v0 is None else np.array(v0, dtype=float)
    v /= v.max()
    for _ in range(max_iter):
        Mv = M @ v
        if np.all(v > 0):
            ratios = Mv / v
            lo, hi = ratios.min(), ratios.max()
            if hi - lo <= tol * hi:
                # Rayleigh quotient, guaranteed inside the bounds
                r = float(v @ Mv / (v @ v))
                r = min(max(r, lo), hi)
                return r, v
        w = Mv / s + v
        v = w / w.max()
    raise NumericalFailure(f"spectral radius: no convergence after {max_iter} iterations")


def lambda_fn(model: MmpModel, beta: float, tol: float = SPECTRAL_TOL) -> float:
    r, _ = spectral_radius(build_kernel_beta(model, beta), tol=tol)
    return float(np.log(r))


def log_moment_drift(model: MmpModel) -> float:
    """``E log|rho_0|`` under the stationary chain; equals ``Lambda'(0)``."""
    pi = stationary_distribution(model)
    total = 0.0
    for i, j, _xi, rho, w in model.iter_atoms():
        total += pi[i] * model.transition[i, j] * w * np.log(abs(rho))
    return float(total)


def solve_kappa(model: MmpModel, tol: float = KAPPA_TOL, beta_max: float = BETA_MAX,
                spectral_tol: float = SPECTRAL_TOL) -> float:
    """Positive root of ``Lambda``.

    ``Lambda(0) = 0`` always, so the bracket starts from the first point to the
    right of 0 where ``Lambda < 0`` and doubles until ``Lambda >= 0``.
    """
    slope = log_moment_drift(model)
    if not slope < 0:
        raise AssumptionViolation(
            f"contractive-at-zero violated: Lambda'(0) = E log|rho| = {slope:.6g} >= 0"
        )
    lam = lambda b: lambda_fn(model, b, spectral_tol)

    lo = min(1e-3, beta_max / 2)
    while lam(lo) >= 0:
        lo /= 2
        if lo < 1e-12:
            raise NumericalFailure("could not step off the trivial root at beta = 0")
    hi = 2 * lo
    while True:
        hi = min(hi, beta_max)
        if lam(hi) >= 0:
            break
        if hi >= beta_max:
            raise AssumptionViolation(
                f"no sign change: Lambda(beta) < 0 for all beta <= beta_max = {beta_max}"
            )
        lo, hi = hi, 2 * hi
    # bisection down to floating-point resolution of the bracket
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if lam(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-3 * tol * max(1.0, hi):
            break
    kappa = lo if abs(lam(lo)) <= abs(lam(hi)) else hi
    if abs(lam(kappa)) > tol:
        raise NumericalFailure(f"kappa solve: |Lambda(kappa)| = {abs(lam(kappa)):.3e} > tol")
    return kappa


@dataclass
class Tilt:
    h: np.ndarray
    tilted_transition: np.ndarray
    tilted_atoms: dict
    pi_h: np.ndarray
    drift: float
    drift_untilted_coefficients: float


def tilt(model: MmpModel, kappa: float, spectral_tol: float = SPECTRAL_TOL) -> Tilt:
    """Exponential change of measure at ``kappa``.

    ``H~[i, j] = H_kappa[i, j] h(j) / h(i)`` with ``h`` the Perron vector of
    ``H_kappa``; atom weights on each edge are reweighted by ``|rho|^kappa``.
    ``drift`` is ``E~ log|rho_0|`` under the tilted stationary law and equals
    ``Lambda'(kappa)``.  ``drift_untilted_coefficients`` keeps the original
    atom weights and only tilts the chain, for comparison.
    """
    K = build_kernel_beta(model, kappa)
    r, h = spectral_radius(K, tol=spectral_tol)
    if abs(np.log(r)) > 1e-6:
        raise AssumptionViolation(f"tilt requires Lambda(kappa) = 0, got {np.log(r):.3e}")
    # dividing by r absorbs the residual of the kappa solve so rows sum to 1
    Ht = K * h[None, :] / (h[:, None] * r)
    Ht /= Ht.sum(axis=1, keepdims=True)
    atoms = {}
    for i, j in model.edges():
        law = model.edge_law(i, j)
        wt = law.w * np.abs(law.rho) ** kappa
        atoms[(i, j)] = wt / wt.sum()
    pi_h = stationary_distribution(Ht)
    drift = 0.0
    drift_plain = 0.0
    for i, j in model.edges():
        law = model.edge_law(i, j)
        logs = np.log(np.abs(law.rho))
        drift += pi_h[i] * Ht[i, j] * float(atoms[(i, j)] @ logs)
        drift_plain += pi_h[i] * Ht[i, j] * float(law.w @ logs)
    if not drift > 0:
        raise AssumptionViolation(f"nonpositive drift under the tilted measure: {drift:.6g}")
    return Tilt(h=h, tilted_transition=Ht, tilted_atoms=atoms, pi_h=pi_h, drift=float(drift),
                drift_untilted_coefficients=float(drift_plain))


@dataclass
class SpectralAnalysis:
    beta_grid: list
    kappa: float
    h: np.ndarray
    tilted_transition: np.ndarray
    tilted_atoms: dict
    pi: np.ndarray
    pi_h: np.ndarray
    drift: float
    drift_untilted_coefficients: float
    lambda_slope_at_zero: float
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "beta_grid": [{"beta": b, "lambda": l} for b, l in self.beta_grid],
            "h": self.h.tolist(),
            "tilted_transition": self.tilted_transition.tolist(),
            "tilted_atoms": [
                {"from": i, "to": j, "w": w.tolist()} for (i, j), w in sorted(self.tilted_atoms.items())
            ],
            "pi": self.pi.tolist(),
            "pi_h": self.pi_h.tolist(),
            "drift": self.drift,
            "drift_untilted_coefficients": self.drift_untilted_coefficients,
            "lambda_slope_at_zero": self.lambda_slope_at_zero,
        }


def analyze(model: MmpModel, tol: float = KAPPA_TOL, beta_max: float = BETA_MAX,
            spectral_tol: float = SPECTRAL_TOL, grid=None) -> SpectralAnalysis:
    """Full spectral pass: kappa, tilt, and ``Lambda`` sampled on a grid.

    The default grid is 41 points on ``[0, min(2 kappa, beta_max)]``.
    """
    kappa = solve_kappa(model, tol=tol, beta_max=beta_max, spectral_tol=spectral_tol)
    t = tilt(model, kappa, spectral_tol=spectral_tol)
    if grid is None:
        grid = np.linspace(0.0, min(2 * kappa, beta_max), 41)
    samples = [(float(b), lambda_fn(model, float(b), spectral_tol)) for b in grid]
    return SpectralAnalysis(
        beta_grid=samples,
        kappa=kappa,
        h=t.h,
        tilted_transition=t.tilted_transition,
        tilted_atoms=t.tilted_atoms,
        pi=stationary_distribution(model),
        pi_h=t.pi_h,
        drift=t.drift,
        drift_untilted_coefficients=t.drift_untilted_coefficients,
        lambda_slope_at_zero=log_moment_drift(model),
        config={"kappa_tol": tol, "beta_max": beta_max, "spectral_tol": spectral_tol},
    )


def finite_n_rate(model: MmpModel, beta: float, n: int) -> np.ndarray:
    """``(1/n) log (H_beta^n 1)(x)`` for every state ``x``.

    Computed with per-step rescaling so large ``n`` does not overflow.
    """
    K = build_kernel_beta(model, beta)
    v = np.ones(K.shape[0])
    log_scale = 0.0
    for _ in range(n):
        v = K @ v
        m = v.max()
        log_scale += np.log(m)
        v = v / m
    return (log_scale + np.log(v)) / n
