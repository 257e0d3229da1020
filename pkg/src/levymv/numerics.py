"""Shared numerical kernels: Bessel K, log-gamma, FFT, quadrature, bounded optimization.

Everything here is a thin, contract-checked layer over scipy/numpy so the
rest of the library can rely on a single set of conventions (DFT sign,
quadrature tolerance, optimizer status strings).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special

__all__ = [
    "Grid1D",
    "bessel_k",
    "log_gamma",
    "gamma",
    "fft",
    "ifft",
    "minimize_bounded",
    "quadrature",
    "OptimizeOutcome",
]

MAX_BESSEL_ORDER = 50.0
DEFAULT_QUAD_TOL = 1e-10
QUAD_MAX_LEVELS = 30  # passed to scipy as subdivision limit 2**levels cap


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid, n_points a power of two (FFT-ready)."""

    n_points: int
    spacing: float
    origin: float

    def __post_init__(self):
        if self.n_points < 2 or (self.n_points & (self.n_points - 1)) != 0:
            raise ValueError(f"n_points must be a power of two, got {self.n_points}")
        if not (self.spacing > 0):
            raise ValueError("spacing must be positive")

    @property
    def points(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.n_points)


def bessel_k(order, x):
    """Modified Bessel function of the second kind K_order(x).

    Accepts real x > 0 or complex x with Re(x) > 0 (needed when the
    argument comes from a characteristic exponent). Vectorized in x and
    in order.
    """
    if np.max(np.abs(order)) > MAX_BESSEL_ORDER:
        raise ValueError(f"|order| must be <= {MAX_BESSEL_ORDER}, got {order}")
    x = np.asarray(x)
    if np.iscomplexobj(x):
        if np.any(x.real <= 0):
            raise ValueError("bessel_k requires Re(x) > 0")
    else:
        if np.any(x <= 0):
            raise ValueError("bessel_k requires x > 0")
        if np.any((x < 1e-8) & (abs(order) > 1)):
            raise OverflowError(
                f"K_{order}(x) overflows for x < 1e-8 with |order| > 1"
            )
    out = special.kv(order, x)
    if np.any(np.isinf(out)):
        raise OverflowError(f"K_{order} overflowed at some grid point")
    return out[()] if out.ndim == 0 else out


def log_gamma(x: float) -> tuple[float, int]:
    """log|Gamma(x)| and the sign of Gamma(x); poles at 0, -1, -2, ... raise."""
    if x <= 0 and float(x) == int(x):
        raise ValueError(f"Gamma pole at {x}")
    return special.gammaln(x), int(np.sign(special.gamma(x)))


def gamma(x: float) -> float:
    """Gamma(x), signed; pole check as in log_gamma."""
    if x <= 0 and float(x) == int(x):
        raise ValueError(f"Gamma pole at {x}")
    return float(special.gamma(x))


def _check_pow2(n: int) -> None:
    if n < 2 or (n & (n - 1)) != 0:
        raise ValueError(f"length must be a power of two, got {n}")


def fft(values) -> np.ndarray:
    """DFT with convention X_j = sum_k x_k exp(-2*pi*i*j*k/N)."""
    values = np.asarray(values)
    _check_pow2(values.shape[-1])
    return np.fft.fft(values)


def ifft(values) -> np.ndarray:
    values = np.asarray(values)
    _check_pow2(values.shape[-1])
    return np.fft.ifft(values)


@dataclass(frozen=True)
class OptimizeOutcome:
    x: np.ndarray
    value: float
    status: str  # "converged" | "iteration-limit" | "failed"
    n_iter: int

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def minimize_bounded(objective, start, lower, upper, *, max_iter: int = 500,
                     tol: float = 1e-9) -> OptimizeOutcome:
    """Bounded quasi-Newton minimization (L-BFGS-B, central-difference gradients).

    The returned point is always feasible and never worse than the start.
    """
    start = np.asarray(start, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if np.any(lower > start) or np.any(start > upper):
        raise ValueError("start must satisfy lower <= start <= upper")
    f0 = float(objective(start))
    if not np.isfinite(f0):
        raise ValueError("objective not finite at start")

    res = optimize.minimize(
        objective, start, method="L-BFGS-B",
        bounds=list(zip(lower, upper)),
        jac="3-point",
        options={"maxiter": max_iter, "ftol": tol, "gtol": 1e-10},
    )
    x = np.clip(res.x, lower, upper)
    value = float(res.fun)
    if value > f0:  # L-BFGS-B can report a worse final point on failure
        x, value = start, f0
    if res.status == 0:
        status = "converged"
    elif res.status == 1:
        status = "iteration-limit"
    else:
        status = "failed"
    return OptimizeOutcome(x=x, value=value, status=status, n_iter=int(res.nit))


def quadrature(f, a: float, b: float, tol: float = DEFAULT_QUAD_TOL):
    """Adaptive quadrature of a real- or complex-valued f on (a, b); b may be inf."""
    val, err = integrate.quad(f, a, b, epsabs=tol, epsrel=tol,
                              limit=200, complex_func=_is_complex_func(f, a, b))
    if abs(err) > max(tol * 100, 1e-8) * (1 + abs(val)):
        raise RuntimeError(f"quadrature did not converge: estimate err {err}")
    return val


def _is_complex_func(f, a, b) -> bool:
    probe = a + 0.5 if np.isinf(b) else 0.5 * (a + b)
    try:
        return bool(np.iscomplexobj(f(probe)))
    except Exception:
        return False
