"""Model families: parameter containers, validity checks, characteristic functions.

Eight return-model families plus the Gaussian benchmark. Each parameter class
is an immutable dataclass carrying daily-scale parameters; `char_fn` evaluates
the joint characteristic function at time t (vectorized over a matrix of
frequency vectors), and `marginal_char_fn` the univariate margins.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np
from scipy import special

from .numerics import bessel_k, gamma

__all__ = [
    "GigLaw", "CtsSubordinator", "GammaLaw", "StdCtsLaw", "CtsLaw",
    "MghParams", "MntsParams", "AlphaGhParams", "RhoAlphaGhParams",
    "MixedTsParams", "MgvgParams", "LinearIcaParams", "LinearPcaParams",
    "MNormalParams",
    "mvbm_char_exponent", "laplace_exponent", "char_fn", "marginal_char_fn",
    "param_count", "validate", "reduce", "Reduction",
    "params_to_dict", "params_from_dict", "params_to_json", "params_from_json",
    "FAMILIES",
]


# ---------------------------------------------------------------------------
# building blocks: subordinator laws and tempered stable exponents
# ---------------------------------------------------------------------------

def _log1pc(z):
    """log(1 + z) for complex z, accurate near z = 0."""
    z = np.asarray(z, dtype=complex)
    mod2 = 2 * z.real + z.real ** 2 + z.imag ** 2
    return 0.5 * np.log1p(mod2) + 1j * np.arctan2(z.imag, 1 + z.real)


def _expm1c(w):
    """exp(w) - 1 for complex w, accurate near w = 0."""
    w = np.asarray(w, dtype=complex)
    return (np.expm1(w.real) * np.cos(w.imag) - 2 * np.sin(w.imag / 2) ** 2
            + 1j * np.exp(w.real) * np.sin(w.imag))


def _pow_diff(lam: float, z, alpha: float):
    """(lam - z)^alpha - lam^alpha without the eps*lam^alpha cancellation."""
    z = np.asarray(z, dtype=complex)
    ratio = -z / lam
    if np.any(ratio.real <= -1):
        raise ValueError("lam - z left the right half-plane")
    return lam ** alpha * _expm1c(alpha * _log1pc(ratio))


def _log_bessel_k(order: float, z):
    """log K_order(z) with the winding of exp(-z) tracked explicitly.

    Uses the exponentially scaled kve so the principal log is taken of a
    slowly varying factor; required when raising GH characteristic
    functions to non-integer powers of t.
    """
    z = np.asarray(z, dtype=complex)
    return np.log(special.kve(order, z)) - z


@dataclass(frozen=True)
class GigLaw:
    """Generalized inverse Gaussian law GIG(epsilon, chi, psi)."""

    epsilon: float
    chi: float
    psi: float

    def admissible(self) -> list[str]:
        out = []
        if self.chi < 0 or self.psi < 0:
            out.append("chi and psi must be nonnegative")
        if self.chi == 0 and self.psi == 0:
            out.append("chi and psi both zero")
        if self.chi == 0 and self.epsilon <= 0:
            out.append("chi=0 requires epsilon > 0")
        if self.psi == 0 and self.epsilon >= 0:
            out.append("psi=0 requires epsilon < 0")
        return out

    def log_mgf(self, z):
        """log E[exp(z*S)], Re z <= 0 (or complex z with Re(psi - 2z) > 0)."""
        eps, chi, psi = self.epsilon, self.chi, self.psi
        z = np.asarray(z, dtype=complex)
        if chi == 0:
            # gamma with shape epsilon, rate psi/2
            return -eps * _log1pc(-2 * z / psi)
        if psi == 0:
            # inverse gamma limit, epsilon < 0
            out = np.zeros_like(z)
            nz = z != 0
            w = np.sqrt(-2 * z[nz] * chi)
            out[nz] = (np.log(2.0) - special.gammaln(-eps)
                       - 0.5 * eps * np.log(chi / 4)
                       - 0.5 * eps * np.log(-2 * z[nz])
                       + _log_bessel_k(eps, w))
            return out[()] if out.ndim == 0 else out
        arg = np.sqrt(chi * (psi - 2 * z))
        return (-0.5 * eps * _log1pc(-2 * z / psi)
                + _log_bessel_k(self.epsilon, arg)
                - np.log(bessel_k(self.epsilon, np.sqrt(chi * psi))))

    def raw_moment(self, m: int) -> float:
        eps, chi, psi = self.epsilon, self.chi, self.psi
        if chi == 0:
            return float(np.exp(special.gammaln(eps + m) - special.gammaln(eps))
                         * (2.0 / psi) ** m)
        if psi == 0:
            if eps + m >= 0:
                raise ValueError(f"moment of order {m} does not exist for psi=0, eps={eps}")
            return float(np.exp(special.gammaln(-eps - m) - special.gammaln(-eps))
                         * (chi / 2.0) ** m)
        omega = np.sqrt(chi * psi)
        return float((chi / psi) ** (m / 2)
                     * bessel_k(eps + m, omega) / bessel_k(eps, omega))

    def cumulants(self) -> np.ndarray:
        eps, chi, psi = self.epsilon, self.chi, self.psi
        if chi > 0 and psi > 0:
            # one vectorized Bessel call for all four moment orders
            omega = np.sqrt(chi * psi)
            kv = bessel_k(eps + np.arange(5.0), omega)
            m = (chi / psi) ** (np.arange(1, 5) / 2.0) * kv[1:] / kv[0]
        else:
            m = np.array([self.raw_moment(k) for k in range(1, 5)])
        return _raw_to_cumulants(m)


@dataclass(frozen=True)
class CtsSubordinator:
    """Classical tempered stable subordinator: alpha in (0,1), lambda, C > 0."""

    alpha: float
    lam: float
    C: float

    def admissible(self) -> list[str]:
        out = []
        if not (0 < self.alpha < 1):
            out.append("alpha must lie in (0,1)")
        if self.lam <= 0:
            out.append("lambda must be positive")
        if self.C <= 0:
            out.append("C must be positive")
        return out

    def log_mgf(self, z):
        return self.C * gamma(-self.alpha) * _pow_diff(self.lam, z, self.alpha)

    def cumulants(self) -> np.ndarray:
        k = np.arange(1, 5)
        return self.C * special.gamma(k - self.alpha) * self.lam ** (self.alpha - k)


@dataclass(frozen=True)
class GammaLaw:
    """Gamma(shape, rate) with E = shape/rate."""

    shape: float
    rate: float

    def admissible(self) -> list[str]:
        out = []
        if self.shape <= 0:
            out.append("shape must be positive")
        if self.rate <= 0:
            out.append("rate must be positive")
        return out

    def log_mgf(self, z):
        z = np.asarray(z, dtype=complex)
        ratio = -z / self.rate
        if np.any(ratio.real <= -1):
            raise ValueError("1 - z/rate left the right half-plane")
        return -self.shape * _log1pc(ratio)

    def cumulants(self) -> np.ndarray:
        k = np.arange(1, 5)
        return self.shape * special.factorial(k - 1) / self.rate ** k


def _raw_to_cumulants(m: np.ndarray) -> np.ndarray:
    c1 = m[0]
    c2 = m[1] - m[0] ** 2
    c3 = m[2] - 3 * m[1] * m[0] + 2 * m[0] ** 3
    c4 = m[3] - 4 * m[2] * m[0] - 3 * m[1] ** 2 + 12 * m[1] * m[0] ** 2 - 6 * m[0] ** 4
    return np.array([c1, c2, c3, c4])


@dataclass(frozen=True)
class StdCtsLaw:
    """Zero-mean unit-variance two-sided classical tempered stable law."""

    alpha: float
    lam_plus: float
    lam_minus: float

    def admissible(self) -> list[str]:
        out = []
        if not (0 < self.alpha < 2) or self.alpha == 1:
            out.append("alpha must lie in (0,2) excluding 1")
        if self.lam_plus <= 0 or self.lam_minus <= 0:
            out.append("tempering rates must be positive")
        return out

    @property
    def scale(self) -> float:
        """C making the second cumulant exactly one."""
        a, lp, lm = self.alpha, self.lam_plus, self.lam_minus
        return 1.0 / (special.gamma(2 - a) * (lp ** (a - 2) + lm ** (a - 2)))

    def exponent(self, u):
        """Characteristic exponent: log E[exp(i*u*X)] per unit time."""
        a, lp, lm = self.alpha, self.lam_plus, self.lam_minus
        u = np.asarray(u, dtype=float)
        denom2 = (a - 1) * (lp ** (a - 2) + lm ** (a - 2))
        core = (_pow_diff(lp, 1j * u, a) + _pow_diff(lm, -1j * u, a)) / (a * denom2)
        drift = 1j * u * (lp ** (a - 1) - lm ** (a - 1)) / denom2
        return core + drift

    def cumulants(self) -> np.ndarray:
        a, lp, lm = self.alpha, self.lam_plus, self.lam_minus
        C = self.scale
        c3 = C * special.gamma(3 - a) * (lp ** (a - 3) - lm ** (a - 3))
        c4 = C * special.gamma(4 - a) * (lp ** (a - 4) + lm ** (a - 4))
        return np.array([0.0, 1.0, c3, c4])


@dataclass(frozen=True)
class CtsLaw:
    """Two-sided classical tempered stable with free scale and location."""

    alpha: float
    lam_plus: float
    lam_minus: float
    scale: float
    location: float

    def admissible(self) -> list[str]:
        out = []
        if not (0 < self.alpha < 2) or self.alpha == 1:
            out.append("alpha must lie in (0,2) excluding 1")
        if self.lam_plus <= 0 or self.lam_minus <= 0:
            out.append("tempering rates must be positive")
        if self.scale <= 0:
            out.append("scale must be positive")
        return out

    def exponent(self, u):
        a, lp, lm = self.alpha, self.lam_plus, self.lam_minus
        u = np.asarray(u, dtype=float)
        core = self.scale * gamma(-a) * (_pow_diff(lp, 1j * u, a)
                                         + _pow_diff(lm, -1j * u, a))
        return 1j * u * self.location + core

    def cumulants(self) -> np.ndarray:
        a, lp, lm, C = self.alpha, self.lam_plus, self.lam_minus, self.scale
        k = np.arange(1, 5)
        c = C * special.gamma(k - a) * (lp ** (a - k) + (-1.0) ** k * lm ** (a - k))
        c[0] += self.location
        return c


def mvbm_char_exponent(theta, Sigma, u):
    """Characteristic exponent of multivariate Brownian motion with drift.

    Returns i*u'theta - 0.5*u'Sigma*u, vectorized over rows of u.
    """
    theta = np.asarray(theta, dtype=float)
    Sigma = np.asarray(Sigma, dtype=float)
    U = np.atleast_2d(np.asarray(u, dtype=float))
    if U.shape[1] != theta.shape[0] or Sigma.shape != (theta.shape[0],) * 2:
        raise ValueError("dimension mismatch")
    out = 1j * U @ theta - 0.5 * np.einsum("ij,jk,ik->i", U, Sigma, U)
    return out if np.asarray(u).ndim > 1 else out[0]


def laplace_exponent(subordinator, z):
    """Laplace exponent l(z) = log E[exp(z*S_1)] of a subordinator law."""
    z = np.asarray(z, dtype=complex)
    if np.any(z.real > 1e-12):
        raise ValueError("laplace_exponent requires Re z <= 0")
    return subordinator.log_mgf(z)


# ---------------------------------------------------------------------------
# correlation-matrix helpers
# ---------------------------------------------------------------------------

def _check_spd(mat, name: str) -> list[str]:
    mat = np.asarray(mat, dtype=float)
    out = []
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        return [f"{name} must be a square matrix"]
    if not np.allclose(mat, mat.T, atol=1e-10):
        out.append(f"{name} must be symmetric")
    try:
        np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        out.append(f"{name} must be positive definite")
    return out


def as_correlation(mat) -> np.ndarray:
    """Validate/repair a correlation matrix; eigmin in (-1e-10, 0) is nudged."""
    mat = np.asarray(mat, dtype=float)
    mat = 0.5 * (mat + mat.T)
    eigmin = float(np.linalg.eigvalsh(mat)[0])
    if eigmin <= -1e-10:
        raise ValueError(f"matrix is not PSD (eigmin={eigmin:.3e})")
    if eigmin <= 0:
        mat = mat + 1e-10 * np.eye(mat.shape[0])
    d = np.sqrt(np.diag(mat))
    return mat / np.outer(d, d)


# ---------------------------------------------------------------------------
# parameter containers
# ---------------------------------------------------------------------------

def _vec(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


def _mat(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


class _ParamsBase:
    """Shared surface: validation, marginal slices, serialization."""

    family: str = ""

    @property
    def n(self) -> int:
        return len(self.mu)  # type: ignore[attr-defined]

    def validate(self) -> list[str]:
        raise NotImplementedError

    def log_char_fn(self, u, t: float = 1.0):
        raise NotImplementedError

    def char_fn(self, u, t: float = 1.0):
        """Joint characteristic function at time t; u is (n,) or (m, n)."""
        return np.exp(self.log_char_fn(u, t))

    def marginal_char_fn(self, j: int, u, t: float = 1.0):
        """Characteristic function of margin j (0-based) at real u."""
        if not 0 <= j < self.n:
            raise IndexError(f"margin index {j} out of range for n={self.n}")
        u = np.atleast_1d(np.asarray(u, dtype=float))
        U = np.zeros((len(u), self.n))
        U[:, j] = u
        out = self.char_fn(U, t)
        return out if np.asarray(u).ndim else out


@dataclass(frozen=True)
class MghParams(_ParamsBase):
    """Multivariate generalized hyperbolic: GIG-subordinated correlated BM."""

    family = "MGH"
    epsilon: float
    chi: float
    psi: float
    mu: np.ndarray
    theta: np.ndarray
    Sigma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu", _vec(self.mu))
        object.__setattr__(self, "theta", _vec(self.theta))
        object.__setattr__(self, "Sigma", _mat(self.Sigma))

    @property
    def mixing(self) -> GigLaw:
        return GigLaw(self.epsilon, self.chi, self.psi)

    def validate(self) -> list[str]:
        out = self.mixing.admissible()
        out += _check_spd(self.Sigma, "Sigma")
        if not (len(self.mu) == len(self.theta) == self.Sigma.shape[0]):
            out.append("dimension mismatch between mu, theta, Sigma")
        return out

    def log_char_fn(self, u, t: float = 1.0):
        U = np.atleast_2d(np.asarray(u, dtype=float))
        phi = mvbm_char_exponent(self.theta, self.Sigma, U)
        out = t * (1j * U @ self.mu + self.mixing.log_mgf(phi))
        return out if np.asarray(u).ndim > 1 else out[0]


@dataclass(frozen=True)
class MntsParams(_ParamsBase):
    """Multivariate normal tempered stable: CTS-subordinated correlated BM."""

    family = "MNTS"
    a: float
    lam: float
    C: float
    mu: np.ndarray
    theta: np.ndarray
    Sigma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu", _vec(self.mu))
        object.__setattr__(self, "theta", _vec(self.theta))
        object.__setattr__(self, "Sigma", _mat(self.Sigma))

    @property
    def subordinator(self) -> CtsSubordinator:
        return CtsSubordinator(self.a / 2.0, self.lam, self.C)

    def validate(self) -> list[str]:
        out = []
        if not (0 < self.a < 2):
            out.append("a must lie in (0,2)")
        if self.lam <= 0:
            out.append("lambda must be positive")
        if self.C <= 0:
            out.append("C must be positive")
        out += _check_spd(self.Sigma, "Sigma")
        if not (len(self.mu) == len(self.theta) == self.Sigma.shape[0]):
            out.append("dimension mismatch between mu, theta, Sigma")
        return out

    def log_char_fn(self, u, t: float = 1.0):
        U = np.atleast_2d(np.asarray(u, dtype=float))
        phi = mvbm_char_exponent(self.theta, self.Sigma, U)
        out = t * (1j * U @ self.mu + self.subordinator.log_mgf(phi))
        return out if np.asarray(u).ndim > 1 else out[0]


def _gh_margin_log_terms(U, theta, sigma, chi, psi, epsilon, a):
    """Per-margin idiosyncratic factors shared by the alpha-GH constructions.

    Sum over j of (a - eps/2)*log(1 - 2*phi_j/psi_j) + log K-ratio; U is (m, n).
    """
    Phi = 1j * U * theta - 0.5 * U ** 2 * sigma ** 2
    out = (a - epsilon / 2.0) * _log1pc(-2 * Phi / psi)
    omega0 = np.sqrt(chi * psi)
    pos = chi > 0
    if np.any(pos):
        arg = np.sqrt(chi[pos] * (psi[pos] - 2 * Phi[:, pos]))
        out[:, pos] += (_log_bessel_k(epsilon, arg)
                        - np.log(bessel_k(epsilon, omega0[pos])))
    # chi_j = 0: GIG(-eps) + Gamma(eps-a) collapse to the pure power factor,
    # already covered by the (a - eps/2) exponent.
    return out.sum(axis=1), Phi


@dataclass(frozen=True)
class AlphaGhParams(_ParamsBase):
    """Common-plus-idiosyncratic GIG subordination, independent Brownian parts."""

    family = "AlphaGH"
    epsilon: float
    a: float
    chi: np.ndarray
    psi: np.ndarray
    mu: np.ndarray
    theta: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        for name in ("chi", "psi", "mu", "theta", "sigma"):
            object.__setattr__(self, name, _vec(getattr(self, name)))

    def validate(self) -> list[str]:
        out = []
        if not (self.epsilon > 0):
            out.append("epsilon must be positive")
        if not (0 < self.a < self.epsilon):
            out.append("a must lie strictly between 0 and epsilon")
        if np.any(self.psi <= 0):
            out.append("psi_j must be positive")
        if np.any(self.chi < 0):
            out.append("chi_j must be nonnegative")
        if np.any(self.sigma <= 0):
            out.append("sigma_j must be positive")
        lens = {len(getattr(self, f)) for f in ("chi", "psi", "mu", "theta", "sigma")}
        if len(lens) != 1:
            out.append("vector fields must share the margin count")
        return out

    def log_char_fn(self, u, t: float = 1.0):
        U = np.atleast_2d(np.asarray(u, dtype=float))
        idio, Phi = _gh_margin_log_terms(U, self.theta, self.sigma, self.chi,
                                         self.psi, self.epsilon, self.a)
        common = -self.a * _log1pc(-2 * (Phi / self.psi).sum(axis=1))
        out = t * (1j * U @ self.mu + idio + common)
        return out if np.asarray(u).ndim > 1 else out[0]


@dataclass(frozen=True)
class RhoAlphaGhParams(_ParamsBase):
    """Alpha-GH with a correlated Brownian part on the common subordinator."""

    family = "RhoAlphaGH"
    epsilon: float
    a: float
    chi: np.ndarray
    psi: np.ndarray
    mu: np.ndarray
    theta: np.ndarray
    sigma: np.ndarray
    Omega_rho: np.ndarray

    def __post_init__(self):
        for name in ("chi", "psi", "mu", "theta", "sigma"):
            object.__setattr__(self, name, _vec(getattr(self, name)))
        object.__setattr__(self, "Omega_rho", _mat(self.Omega_rho))

    def validate(self) -> list[str]:
        out = AlphaGhParams(self.epsilon, self.a, self.chi, self.psi,
                            self.mu, self.theta, self.sigma).validate()
        O = self.Omega_rho
        if O.shape != (self.n, self.n):
            out.append("Omega_rho dimension mismatch")
            return out
        if not np.allclose(np.diag(O), 1.0, atol=1e-10):
            out.append("Omega_rho must have unit diagonal")
        if not np.allclose(O, O.T, atol=1e-10):
            out.append("Omega_rho must be symmetric")
        elif float(np.linalg.eigvalsh(O)[0]) <= -1e-10:
            out.append("Omega_rho must be PSD")
        return out

    @property
    def sigma_rho(self) -> np.ndarray:
        """Covariance of the common Brownian part: s_j s_k sqrt(a_j a_k) rho_jk."""
        s = self.sigma / np.sqrt(self.psi)
        return np.outer(s, s) * self.Omega_rho

    def log_char_fn(self, u, t: float = 1.0):
        U = np.atleast_2d(np.asarray(u, dtype=float))
        idio, _ = _gh_margin_log_terms(U, self.theta, self.sigma, self.chi,
                                       self.psi, self.epsilon, self.a)
        theta_a = self.theta / self.psi
        phi_common = mvbm_char_exponent(theta_a, self.sigma_rho, U)
        common = -self.a * _log1pc(-2 * phi_common)
        out = t * (1j * U @ self.mu + idio + common)
        return out if np.asarray(u).ndim > 1 else out[0]


@dataclass(frozen=True)
class MixedTsParams(_ParamsBase):
    """Mixed tempered stable with gamma subordination; common rate fixed at 1."""

    family = "MMixedTS"
    mu: np.ndarray
    beta: np.ndarray
    alpha: np.ndarray
    lam_plus: np.ndarray
    lam_minus: np.ndarray
    c: np.ndarray
    m: np.ndarray
    nbar: float

    def __post_init__(self):
        for name in ("mu", "beta", "alpha", "lam_plus", "lam_minus", "c", "m"):
            object.__setattr__(self, name, _vec(getattr(self, name)))

    def validate(self) -> list[str]:
        out = []
        if np.any((self.alpha <= 0) | (self.alpha >= 2) | (self.alpha == 1)):
            out.append("alpha_j must lie in (0,2) excluding 1")
        for name in ("lam_plus", "lam_minus", "c", "m"):
            if np.any(getattr(self, name) <= 0):
                out.append(f"{name} must be positive")
        if self.nbar <= 0:
            out.append("nbar must be positive")
        return out

    def component(self, j: int) -> StdCtsLaw:
        return StdCtsLaw(self.alpha[j], self.lam_plus[j], self.lam_minus[j])

    def log_char_fn(self, u, t: float = 1.0):
        U = np.atleast_2d(np.asarray(u, dtype=float))
        n = self.n
        Z = np.empty(U.shape, dtype=complex)  # per-margin subordinated exponent
        for j in range(n):
            Z[:, j] = 1j * U[:, j] * self.beta[j] + self.component(j).exponent(U[:, j])
        a = 1.0 / self.m  # common-factor weights with rate k = 1
        common = GammaLaw(self.nbar, 1.0).log_mgf(Z @ a)
        idio = np.zeros(U.shape[0], dtype=complex)
        for j in range(n):
            idio += GammaLaw(self.c[j], self.m[j]).log_mgf(Z[:, j])
        out = t * (1j * U @ self.mu + common + idio)
        return out if np.asarray(u).ndim > 1 else out[0]


@dataclass(frozen=True)
class MgvgParams(_ParamsBase):
    """Generalized variance gamma: four-factor gamma/compound-Poisson clock."""

    family = "MGVG"
    mu: np.ndarray
    theta: np.ndarray
    sigma: np.ndarray
    k: np.ndarray
    q: np.ndarray
    p: np.ndarray
    c1: float
    c2: float
    Omega_rho: np.ndarray

    def __post_init__(self):
        for name in ("mu", "theta", "sigma", "k", "q", "p"):
            object.__setattr__(self, name, _vec(getattr(self, name)))
        object.__setattr__(self, "Omega_rho", _mat(self.Omega_rho))

    def validate(self) -> list[str]:
        out = []
        if np.any(self.sigma <= 0):
            out.append("sigma must be positive")
        if np.any((self.k <= 0) | (self.k >= 1)):
            out.append("k_j must lie in (0,1)")
        if np.any(self.q <= 0) or np.any(self.p <= 0):
            out.append("q_j and p_j must be positive")
        if not (0 < self.c1 < np.min((1 - self.k) / self.q)):
            out.append("c1 must satisfy 0 < c1 < min_j (1-k_j)/q_j")
        if not (0 < self.c2 < np.min(self.k / self.p)):
            out.append("c2 must satisfy 0 < c2 < min_j k_j/p_j")
        O = self.Omega_rho
        if O.shape != (self.n, self.n):
            out.append("Omega_rho dimension mismatch")
        else:
            if not np.allclose(np.diag(O), 1.0, atol=1e-10):
                out.append("Omega_rho must have unit diagonal")
            if not np.allclose(O, O.T, atol=1e-10):
                out.append("Omega_rho must be symmetric")
            elif float(np.linalg.eigvalsh(O)[0]) <= -1e-10:
                out.append("Omega_rho must be PSD")
        return out

    def log_char_fn(self, u, t: float = 1.0):
        U = np.atleast_2d(np.asarray(u, dtype=float))
        Phi = 1j * U * self.theta - 0.5 * U ** 2 * self.sigma ** 2
        idio = (((self.k - 1) / self.q + self.c1) * _log1pc(-self.q * Phi)
                + (self.k - self.c2 * self.p) * Phi / (1 - self.p * Phi)).sum(axis=1)
        sq = self.sigma * np.sqrt(self.q)
        sp = self.sigma * np.sqrt(self.p)
        phi_q = mvbm_char_exponent(self.theta * self.q, np.outer(sq, sq) * self.Omega_rho, U)
        phi_p = mvbm_char_exponent(self.theta * self.p, np.outer(sp, sp) * self.Omega_rho, U)
        common = -self.c1 * _log1pc(-phi_q) + self.c2 * phi_p / (1 - phi_p)
        out = t * (1j * U @ self.mu + idio + common)
        return out if np.asarray(u).ndim > 1 else out[0]


@dataclass(frozen=True)
class LinearIcaParams(_ParamsBase):
    """Standardized margins driven by a mixing matrix over independent sources.

    components holds one parameter triple per source: (alpha, lam_plus,
    lam_minus) for CTS sources, (lam, a_plus, a_minus) for linear-gamma.
    """

    family = "LinearICA"
    source_family: str  # "CTS" | "LG"
    mu: np.ndarray
    sigma: np.ndarray
    A: np.ndarray
    components: tuple

    def __post_init__(self):
        object.__setattr__(self, "mu", _vec(self.mu))
        object.__setattr__(self, "sigma", _vec(self.sigma))
        object.__setattr__(self, "A", _mat(self.A))
        object.__setattr__(self, "components",
                           tuple(tuple(float(x) for x in c) for c in self.components))

    def validate(self) -> list[str]:
        out = []
        if self.source_family not in ("CTS", "LG"):
            out.append("source_family must be CTS or LG")
        if np.any(self.sigma <= 0):
            out.append("sigma must be positive")
        if self.A.shape != (self.n, self.n):
            out.append("A must be n x n")
        if len(self.components) != self.n:
            out.append("one component triple per margin required")
        for c in self.components:
            if self.source_family == "CTS":
                out += StdCtsLaw(*c).admissible()
            else:
                if any(x <= 0 for x in c):
                    out.append("LG component parameters must be positive")
        return out

    def component_exponent(self, l: int, v):
        if self.source_family == "CTS":
            return StdCtsLaw(*self.components[l]).exponent(v)
        lam, ap, am = self.components[l]
        dp = lam * np.sqrt(am / (ap * (ap + am)))
        dm = lam * np.sqrt(ap / (am * (ap + am)))
        v = np.asarray(v, dtype=float)
        return (-ap * _log1pc(-1j * dp * v / lam)
                - am * _log1pc(1j * dm * v / lam))

    def component_cumulants(self, l: int) -> np.ndarray:
        if self.source_family == "CTS":
            return StdCtsLaw(*self.components[l]).cumulants()
        lam, ap, am = self.components[l]
        dp = lam * np.sqrt(am / (ap * (ap + am)))
        dm = lam * np.sqrt(ap / (am * (ap + am)))
        c3 = 2 * lam ** -3 * (ap * dp ** 3 - am * dm ** 3)
        c4 = 6 * lam ** -4 * (ap * dp ** 4 + am * dm ** 4)
        return np.array([0.0, 1.0, c3, c4])

    def log_char_fn(self, u, t: float = 1.0):
        U = np.atleast_2d(np.asarray(u, dtype=float))
        V = (U * self.sigma) @ self.A  # row k holds A' D_sigma u_k
        out = 1j * U @ self.mu
        for l in range(self.n):
            out = out + self.component_exponent(l, V[:, l])
        out = t * out
        return out if np.asarray(u).ndim > 1 else out[0]


@dataclass(frozen=True)
class LinearPcaParams(_ParamsBase):
    """One common CTS factor plus independent idiosyncratic CTS components."""

    family = "LinearPCA"
    f: np.ndarray
    common: CtsLaw
    idiosyncratic: tuple

    def __post_init__(self):
        object.__setattr__(self, "f", _vec(self.f))
        if not isinstance(self.common, CtsLaw):
            object.__setattr__(self, "common", CtsLaw(*self.common))
        object.__setattr__(self, "idiosyncratic",
                           tuple(c if isinstance(c, CtsLaw) else CtsLaw(*c)
                                 for c in self.idiosyncratic))

    @property
    def n(self) -> int:
        return len(self.f)

    def validate(self) -> list[str]:
        out = self.common.admissible()
        if len(self.idiosyncratic) != self.n:
            out.append("one idiosyncratic law per margin required")
        for law in self.idiosyncratic:
            out += law.admissible()
        return out

    def log_char_fn(self, u, t: float = 1.0):
        U = np.atleast_2d(np.asarray(u, dtype=float))
        out = self.common.exponent(U @ self.f).astype(complex)
        for j in range(self.n):
            out = out + self.idiosyncratic[j].exponent(U[:, j])
        out = t * out
        return out if np.asarray(u).ndim > 1 else out[0]


@dataclass(frozen=True)
class MNormalParams(_ParamsBase):
    """Multivariate normal benchmark."""

    family = "MNormal"
    mu: np.ndarray
    Sigma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu", _vec(self.mu))
        object.__setattr__(self, "Sigma", _mat(self.Sigma))

    def validate(self) -> list[str]:
        out = _check_spd(self.Sigma, "Sigma")
        if self.Sigma.shape[0] != len(self.mu):
            out.append("dimension mismatch between mu and Sigma")
        return out

    def log_char_fn(self, u, t: float = 1.0):
        U = np.atleast_2d(np.asarray(u, dtype=float))
        out = t * (1j * U @ self.mu
                   - 0.5 * np.einsum("ij,jk,ik->i", U, self.Sigma, U))
        return out if np.asarray(u).ndim > 1 else out[0]


FAMILIES = {
    "MNormal": MNormalParams,
    "MGH": MghParams,
    "MNTS": MntsParams,
    "AlphaGH": AlphaGhParams,
    "RhoAlphaGH": RhoAlphaGhParams,
    "MMixedTS": MixedTsParams,
    "MGVG": MgvgParams,
    "ICA-MLCTS": LinearIcaParams,
    "ICA-MLG": LinearIcaParams,
    "PCA-MLCTS": LinearPcaParams,
}


# ---------------------------------------------------------------------------
# module-level operations
# ---------------------------------------------------------------------------

def char_fn(params, u, t: float = 1.0):
    bad = params.validate()
    if bad:
        raise ValueError("invalid parameters: " + "; ".join(bad))
    return params.char_fn(u, t)


def marginal_char_fn(params, j: int, u, t: float = 1.0):
    return params.marginal_char_fn(j, u, t)


def param_count(family: str, n: int, k: int = 1) -> int:
    """Free-parameter count per family for n margins (k PCA factors)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    table = {
        "MNormal": (n * n + 3 * n) // 2,
        "MGH": (n * n + 5 * n) // 2 + 3,
        "MNTS": (n * n + 5 * n) // 2 + 3,
        "AlphaGH": 5 * n + 2,
        "RhoAlphaGH": (n * n + 9 * n) // 2 + 2,
        "MMixedTS": 7 * n + 1,
        "MGVG": (n * n + 11 * n) // 2 + 2,
        "ICA-MLG": n * n + 5 * n,
        "ICA-MLCTS": n * n + 5 * n,
        "PCA-MLCTS": 5 * n + (n + 5) * k,
    }
    if family not in table:
        raise ValueError(f"unknown family {family!r}")
    return table[family]


def validate(params) -> list[str]:
    return params.validate()


@dataclass(frozen=True)
class Reduction:
    tag: str
    params: Optional[_ParamsBase]


def reduce(params, tol: float = 1e-12) -> Optional[Reduction]:
    """Detect known degenerate limits of a parameter set."""
    if isinstance(params, RhoAlphaGhParams):
        if np.allclose(params.Omega_rho, np.eye(params.n), atol=tol):
            return Reduction("AlphaGH", AlphaGhParams(
                params.epsilon, params.a, params.chi, params.psi,
                params.mu, params.theta, params.sigma))
        if np.all(np.abs(params.chi) <= tol):
            return Reduction("RhoAlphaVG", params)
    if isinstance(params, AlphaGhParams):
        if params.a <= tol:
            return Reduction("independent-GH", None)
        if np.all(np.abs(params.chi) <= tol):
            return Reduction("AlphaVG", params)
    if isinstance(params, MghParams):
        if abs(params.chi) <= tol:
            return Reduction("MVG", params)
        if abs(params.epsilon + 0.5) <= tol:
            return Reduction("MNIG", params)
    if isinstance(params, MntsParams):
        if abs(params.a - 1.0) <= tol:
            return Reduction("MNIG", params)
    return None


# ---------------------------------------------------------------------------
# serialization: flat JSON-compatible dicts, arrays in margin order
# ---------------------------------------------------------------------------

def _encode(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, CtsLaw):
        return [value.alpha, value.lam_plus, value.lam_minus, value.scale, value.location]
    if isinstance(value, tuple):
        return [_encode(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def family_tag(params) -> str:
    """The registry tag for a parameter set (distinguishes ICA sources)."""
    if isinstance(params, LinearIcaParams):
        return "ICA-MLCTS" if params.source_family == "CTS" else "ICA-MLG"
    if isinstance(params, LinearPcaParams):
        return "PCA-MLCTS"
    return params.family


def params_to_dict(params) -> dict:
    out = {"family": family_tag(params), "n": params.n}
    for f in fields(params):
        out[f.name] = _encode(getattr(params, f.name))
    return out


def params_from_dict(d: dict):
    d = dict(d)
    family = d.pop("family")
    d.pop("n", None)
    cls = FAMILIES[family]
    if cls is LinearIcaParams:
        d.setdefault("source_family", "CTS" if family.endswith("MLCTS") else "LG")
    if cls is LinearPcaParams:
        d["common"] = CtsLaw(*d["common"])
        d["idiosyncratic"] = tuple(CtsLaw(*c) for c in d["idiosyncratic"])
    return cls(**d)


def params_to_json(params) -> str:
    return json.dumps(params_to_dict(params), indent=2)


def params_from_json(text: str):
    return params_from_dict(json.loads(text))
