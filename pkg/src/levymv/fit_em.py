"""Expectation-maximization maximum likelihood for the mixture families.

The mean-variance-mixture structure Y = mu + theta*S + sqrt(S)*Q*Z makes
the E-step a posterior over the scalar mixing variable S: closed-form
(generalized inverse Gaussian) posteriors for MGH, FFT-density quadrature
for MNTS. The M-step updates the Gaussian block in closed form with a
determinant-normalized Sigma, then profiles the mixing parameters against
the observed-data log-likelihood with a bounded optimizer.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import models as mdl
from .numerics import minimize_bounded
from scipy.special import gammaln


def _log_bessel_k(order, x):
    """Real log K (the models-module helper supports complex arguments)."""
    return np.real(mdl._log_bessel_k(order, x))

__all__ = ["EmState", "posterior_weights", "loglik", "em_update", "fit_em"]

_GL_NODES = 256


@dataclass(frozen=True)
class EmState:
    iteration: int
    params: object
    loglik: float
    delta: np.ndarray
    eta: np.ndarray
    rho: np.ndarray
    damped: bool = False


# ---------------------------------------------------------------------------
# MGH closed forms
# ---------------------------------------------------------------------------

def _gig_log_norm(eps: float, chi: float, psi: float) -> float:
    """log of the constant c with density c * s^(eps-1) exp(-(chi/s+psi*s)/2)."""
    if chi > 0 and psi > 0:
        w = np.sqrt(chi * psi)
        return 0.5 * eps * (np.log(psi) - np.log(chi)) \
            - np.log(2.0) - _log_bessel_k(eps, w)
    if chi == 0:
        return eps * np.log(psi / 2.0) - gammaln(eps)
    return -eps * np.log(chi / 2.0) - gammaln(-eps)


def _mgh_common(Y, params):
    Sigma_inv = np.linalg.inv(params.Sigma)
    resid = Y - params.mu
    rho = np.einsum("ki,ij,kj->k", resid, Sigma_inv, resid)
    theta_tilde = float(params.theta @ Sigma_inv @ params.theta)
    lin = resid @ (Sigma_inv @ params.theta)
    return rho, theta_tilde, lin


def _mgh_posterior(Y, params):
    """Posterior over S given Y is GIG(eps - n/2, chi + rho_k, psi + theta_tilde)."""
    rho, theta_tilde, lin = _mgh_common(Y, params)
    p = params.epsilon - params.n / 2.0
    chi_k = params.chi + rho
    psi_k = params.psi + theta_tilde
    return p, chi_k, psi_k, rho, lin


def _gig_moment(p, chi, psi, r):
    """E[S^r] for GIG(p, chi, psi) with chi, psi > 0 (vectorized)."""
    w = np.sqrt(chi * psi)
    return (chi / psi) ** (r / 2.0) * np.exp(_log_bessel_k(p + r, w)
                                             - _log_bessel_k(p, w))


def _mgh_loglik(Y, params) -> float:
    p, chi_k, psi_k, rho, lin = _mgh_posterior(Y, params)
    n = params.n
    _, logdet = np.linalg.slogdet(params.Sigma)
    w = np.sqrt(chi_k * psi_k)
    per_obs = (-0.5 * n * np.log(2 * np.pi) - 0.5 * logdet + lin
               + _gig_log_norm(params.epsilon, params.chi, params.psi)
               + np.log(2.0) + 0.5 * p * (np.log(chi_k) - np.log(psi_k))
               + _log_bessel_k(p, w))
    return float(np.sum(per_obs))


# ---------------------------------------------------------------------------
# MNTS posteriors by quadrature against the FFT mixing density
# ---------------------------------------------------------------------------

class _MixingTable:
    """Gauss-Legendre nodes/weights of the subordinator density's support,
    with log-density values; rebuilt only when the mixing parameters move."""

    def __init__(self, sub: mdl.CtsSubordinator):
        from .density import cts_subordinator_density

        table = cts_subordinator_density(sub)
        pk = table.pdf.max()
        live = np.flatnonzero(table.pdf > 1e-16 * pk)
        lo = max(table.x[live[0]], 1e-12)
        hi = table.x[live[-1]]
        x, w = np.polynomial.legendre.leggauss(_GL_NODES)
        self.s = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        self.w = 0.5 * (hi - lo) * w
        self.log_h = np.log(np.maximum(table.pdf_at(self.s), 1e-300))


def _mnts_integrals(Y, params, mix: _MixingTable):
    """Row-wise integrals of s^r * f(Y|s) * h(s) for r in (-1, 0, 1)."""
    rho, theta_tilde, lin = _mgh_common(Y, params)
    n = params.n
    _, logdet = np.linalg.slogdet(params.Sigma)
    s, w = mix.s, mix.w
    log_core = (mix.log_h - 0.5 * n * np.log(2 * np.pi * s)
                - 0.5 * theta_tilde * s)                      # (M,)
    L = log_core[None, :] - 0.5 * rho[:, None] / s[None, :]   # (T, M)
    m = L.max(axis=1, keepdims=True)
    E = np.exp(L - m)
    I0 = E @ w
    Im1 = E @ (w / s)
    Ip1 = E @ (w * s)
    log_f = m[:, 0] + np.log(np.maximum(I0, 1e-300)) - 0.5 * logdet + lin
    return I0, Im1, Ip1, log_f


def posterior_weights(Y, params, mix: _MixingTable | None = None):
    """E-step weights (delta_k, eta_k, rho_k) = (E[1/S|Y^k], E[S|Y^k], Mahalanobis)."""
    Y = np.asarray(Y, dtype=float)
    if isinstance(params, mdl.MghParams):
        p, chi_k, psi_k, rho, _ = _mgh_posterior(Y, params)
        delta = _gig_moment(p, chi_k, psi_k, -1.0)
        eta = _gig_moment(p, chi_k, psi_k, 1.0)
        return delta, eta, rho
    if isinstance(params, mdl.MntsParams):
        if mix is None:
            mix = _MixingTable(params.subordinator)
        rho, _, _ = _mgh_common(Y, params)
        I0, Im1, Ip1, _ = _mnts_integrals(Y, params, mix)
        return Im1 / I0, Ip1 / I0, rho
    raise TypeError("EM supports the MGH and MNTS families only")


def loglik(Y, params, mix: _MixingTable | None = None) -> float:
    """Observed-data log-likelihood."""
    Y = np.asarray(Y, dtype=float)
    if isinstance(params, mdl.MghParams):
        return _mgh_loglik(Y, params)
    if isinstance(params, mdl.MntsParams):
        if mix is None:
            mix = _MixingTable(params.subordinator)
        return float(np.sum(_mnts_integrals(Y, params, mix)[3]))
    raise TypeError("EM supports the MGH and MNTS families only")


# ---------------------------------------------------------------------------
# M-step
# ---------------------------------------------------------------------------

def _mixing_bounds(params):
    if isinstance(params, mdl.MghParams):
        start = np.array([params.epsilon, params.chi, params.psi])
        return start, np.array([-5.0, 1e-6, 1e-6]), np.array([5.0, 1e3, 1e3])
    start = np.array([params.a, params.lam, params.C])
    return start, np.array([0.05, 1e-3, 1e-6]), np.array([1.95, 1e3, 1e3])


def _with_mixing(params, x):
    if isinstance(params, mdl.MghParams):
        return replace(params, epsilon=float(x[0]), chi=float(x[1]),
                       psi=float(x[2]))
    return replace(params, a=float(x[0]), lam=float(x[1]), C=float(x[2]))


def em_update(state: EmState, Y: np.ndarray, V: np.ndarray,
              profile_max_iter: int = 40) -> EmState:
    """One EM cycle: weights, Gaussian-block updates, mixing-profile step."""
    Y = np.asarray(Y, dtype=float)
    T, n = Y.shape
    params = state.params
    delta, eta, rho = posterior_weights(Y, params)
    dbar = float(delta.mean())
    ebar = float(eta.mean())
    Ybar = Y.mean(axis=0)

    damped = dbar * ebar - 1.0 <= 1e-12
    if damped:
        theta_new = params.theta
    else:
        theta_new = (delta @ (Ybar - Y)) / T / (dbar * ebar - 1.0)
    mu_new = ((delta @ Y) / T - theta_new) / dbar
    resid = Y - mu_new
    Psi = (resid * delta[:, None]).T @ resid / T \
        - ebar * np.outer(theta_new, theta_new)
    # keep Psi symmetric positive definite; fall back to the delta-weighted
    # scatter alone if the theta correction overshoots
    Psi = 0.5 * (Psi + Psi.T)
    if np.linalg.eigvalsh(Psi)[0] <= 0:
        Psi = (resid * delta[:, None]).T @ resid / T
    detV = float(np.linalg.det(V))
    Sigma_new = (detV ** (1.0 / n)) * Psi / (float(np.linalg.det(Psi)) ** (1.0 / n))
    params = replace(params, mu=mu_new, theta=theta_new, Sigma=Sigma_new)

    # profile the mixing parameters against the observed-data likelihood
    start, lo, hi = _mixing_bounds(params)

    def negll(x):
        try:
            return -loglik(Y, _with_mixing(params, x))
        except (ValueError, OverflowError, FloatingPointError, RuntimeError):
            return 1e15
    res = minimize_bounded(negll, np.clip(start, lo, hi), lo, hi,
                           max_iter=profile_max_iter, tol=1e-10)
    params = _with_mixing(params, res.x)
    return EmState(iteration=state.iteration + 1, params=params,
                   loglik=-res.value, delta=delta, eta=eta, rho=rho,
                   damped=damped)


def _initial_params(Y, family: str):
    mu = Y.mean(axis=0)
    V = np.cov(Y, rowvar=False)
    theta = np.zeros(len(mu))
    if family == "MGH":
        params = mdl.MghParams(epsilon=-0.5, chi=1.0, psi=1.0, mu=mu,
                               theta=theta, Sigma=V)
    elif family == "MNTS":
        a, lam = 1.0, 1.0
        C = lam ** (1 - a / 2) / float(np.exp(gammaln(1 - a / 2)))
        params = mdl.MntsParams(a=a, lam=lam, C=C, mu=mu, theta=theta, Sigma=V)
    else:
        raise ValueError("EM supports the MGH and MNTS families only")
    return params, V


def fit_em(panel, family: str, max_iter: int = 1000, tol: float = 1e-5):
    """EM fit; returns (params, loglik trace). Stops when the gain per
    iteration is at most tol or max_iter is reached."""
    Y = np.asarray(getattr(panel, "returns", panel), dtype=float)
    T, n = Y.shape
    if T <= n + 4:
        raise ValueError("need more observations than margins plus four")
    params, V = _initial_params(Y, family)
    np.linalg.cholesky(V)  # singular sample covariance fails here
    state = EmState(iteration=0, params=params, loglik=loglik(Y, params),
                    delta=np.ones(T), eta=np.ones(T), rho=np.zeros(T))
    trace = [state.loglik]
    while state.iteration < max_iter:
        new = em_update(state, Y, V)
        trace.append(new.loglik)
        gain = new.loglik - state.loglik
        state = new
        if gain <= tol:
            break
    return state.params, np.asarray(trace)
