"""Characteristic-function GMM.

Moment conditions are the gaps between the empirical and model
characteristic functions on a data-driven grid, split into real and
imaginary parts. Two stages: identity weighting first, then the inverse
of a Newey-West HAC estimate of the condition covariance. Standard
errors come from the usual sandwich formula.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import fit_moments as fmo
from . import moments as mo
from .numerics import minimize_bounded

__all__ = [
    "GmmGrid", "GmmResult", "build_grid", "moment_conditions",
    "hac_weighting", "newey_west", "asymptotic_covariance", "fit_gmm",
]


@dataclass(frozen=True)
class GmmGrid:
    points: np.ndarray  # (q, n)
    q: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float))


@dataclass(frozen=True)
class GmmResult:
    params: object
    objective: float
    gbar_norm: float  # squared Euclidean norm of the condition means
    stage: str
    covariance: Optional[np.ndarray]
    q: int
    seed: int
    stage1_params: object = None


def build_grid(panel, q: int, seed: int = 0) -> GmmGrid:
    """Grid of q points in R^n: first coordinates are equally spaced over
    margin 1's observed range; the other coordinates are seeded
    permutations of that vector."""
    if q < 2:
        raise ValueError("q must be >= 2")
    Y = np.asarray(getattr(panel, "returns", panel), dtype=float)
    n = Y.shape[1]
    lo, hi = float(Y[:, 0].min()), float(Y[:, 0].max())
    if not hi > lo:
        raise ValueError("margin 1 is degenerate (min equals max)")
    base = np.linspace(lo, hi, q)
    rng = np.random.default_rng(seed)
    cols = [base] + [rng.permutation(base) for _ in range(n - 1)]
    return GmmGrid(points=np.column_stack(cols), q=q, seed=seed)


def _empirical_cf(Y: np.ndarray, U: np.ndarray) -> np.ndarray:
    return np.exp(1j * Y @ U.T)  # (T, q)


def moment_conditions(params, panel, grid: GmmGrid):
    """(gbar, G): stacked real/imag condition means (2q,) and matrix (T, 2q)."""
    Y = np.asarray(getattr(panel, "returns", panel), dtype=float)
    Z = _empirical_cf(Y, grid.points)
    g = Z - params.char_fn(grid.points)[None, :]
    G = np.hstack([g.real, g.imag])
    return G.mean(axis=0), G


def newey_west(G: np.ndarray, bandwidth: int) -> np.ndarray:
    """Newey-West long-run covariance of the condition matrix rows."""
    T = G.shape[0]
    R = G.T @ G / T
    for lag in range(1, bandwidth + 1):
        w = 1.0 - lag / (bandwidth + 1.0)
        Gamma = G[lag:].T @ G[:-lag] / T
        R += w * (Gamma + Gamma.T)
    return 0.5 * (R + R.T)


def default_bandwidth(T: int) -> int:
    return int(np.floor(4.0 * (T / 100.0) ** (2.0 / 9.0)))


def hac_weighting(G: np.ndarray, bandwidth: int | None = None):
    """(F, R): ridge-regularized inverse of the HAC covariance, and R itself."""
    T, m = G.shape
    if T <= m:
        raise ValueError("need more observations than conditions")
    if bandwidth is None:
        bandwidth = default_bandwidth(T)
    R = newey_west(G, bandwidth)
    eigmin = float(np.linalg.eigvalsh(R)[0])
    floor = 1e-10 * float(np.trace(R)) / m
    if eigmin < floor:
        R = R + (floor - eigmin) * np.eye(m)
    try:
        F = np.linalg.inv(R)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("HAC covariance not invertible after "
                           "regularization") from exc
    return 0.5 * (F + F.T), R


def asymptotic_covariance(J: np.ndarray, F: np.ndarray,
                          R: np.ndarray) -> np.ndarray:
    """Sandwich covariance (J'FJ)^-1 J'F R F J (J'FJ)^-1 of the estimator."""
    JF = J.T @ F
    bread = np.linalg.inv(JF @ J)
    return bread @ (JF @ R @ F.T @ J) @ bread


def _jacobian(gbar_of_x, x, lower, upper, h_rel: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of the condition means."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(len(x)):
        h = h_rel * max(abs(x[i]), 1e-4)
        xp, xm = x.copy(), x.copy()
        xp[i] = min(x[i] + h, upper[i])
        xm[i] = max(x[i] - h, lower[i])
        cols.append((gbar_of_x(xp) - gbar_of_x(xm)) / (xp[i] - xm[i]))
    return np.column_stack(cols)


def fit_gmm(panel, family: str, q: int = 25, start=None, seed: int = 0,
            max_iter: int = 300, with_covariance: bool = True,
            n_starts: int = 100) -> GmmResult:
    """Two-stage GMM fit. The start defaults to the moment-matching fit
    (n_starts random starts)."""
    Y = np.asarray(getattr(panel, "returns", panel), dtype=float)
    T, n = Y.shape
    grid = build_grid(Y, q, seed)
    if start is None:
        start = fmo.fit_moments(Y, family, n_starts=n_starts,
                                seed=seed).params
    target = mo.empirical_moments(Y)
    spec = fmo._family_spec(family, n, target)
    x0 = np.clip(fmo.flatten_params(start), spec.lower, spec.upper)

    ebar = _empirical_cf(Y, grid.points).mean(axis=0)
    ebar_ri = np.concatenate([ebar.real, ebar.imag])

    def gbar_of_x(x):
        p = spec.unflatten(x)
        try:
            if p.validate():
                return None
            psi = p.char_fn(grid.points)
        except (ValueError, OverflowError, FloatingPointError,
                np.linalg.LinAlgError, RuntimeError):
            return None
        out = ebar_ri - np.concatenate([psi.real, psi.imag])
        return out if np.all(np.isfinite(out)) else None

    def objective(F):
        def f(x):
            g = gbar_of_x(x)
            if g is None:
                return 1e10
            return float(g @ F @ g)
        return f

    m = 2 * q
    res1 = minimize_bounded(objective(np.eye(m)), x0, spec.lower, spec.upper,
                            max_iter=max_iter, tol=1e-16)
    _, G1 = moment_conditions(spec.unflatten(res1.x), Y, grid)
    F2, _ = hac_weighting(G1)
    res2 = minimize_bounded(objective(F2), res1.x, spec.lower, spec.upper,
                            max_iter=max_iter, tol=1e-16)

    params = spec.unflatten(res2.x)
    gbar, G2 = moment_conditions(params, Y, grid)
    cov = None
    if with_covariance:
        _, R2 = hac_weighting(G2)
        def gbar_strict(x):
            g = gbar_of_x(x)
            if g is None:
                raise RuntimeError("condition means undefined near solution")
            return g
        J = _jacobian(gbar_strict, res2.x, spec.lower, spec.upper)
        cov = asymptotic_covariance(J, F2, R2) / T
    return GmmResult(params=params, objective=float(res2.value),
                     gbar_norm=float(np.sum(gbar ** 2)), stage="two-stage",
                     covariance=cov, q=q, seed=seed,
                     stage1_params=spec.unflatten(res1.x))
