"""Analytic and numerical moments: per-family cumulant formulas, a cumulant
engine based on differentiating log characteristic functions, and sample
moment summaries.

Cumulant conventions: c1 = mean, c2 = variance, skewness = c3/c2^(3/2),
excess kurtosis = c4/c2^2.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import models as mdl
from .numerics import bessel_k

__all__ = [
    "MomentSummary", "analytic_moments", "analytic_margin_cumulants",
    "analytic_correlation", "numerical_cumulants", "numerical_cross_cumulant",
    "cumulants_of_linear_combination", "empirical_moments",
    "summary_from_cumulants",
]


@dataclass(frozen=True)
class MomentSummary:
    mean: np.ndarray
    sd: np.ndarray
    skewness: np.ndarray
    ex_kurtosis: np.ndarray
    corr: np.ndarray

    def __post_init__(self):
        for name in ("mean", "sd", "skewness", "ex_kurtosis"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        object.__setattr__(self, "corr", np.asarray(self.corr, dtype=float))

    @property
    def n(self) -> int:
        return len(self.mean)


def summary_from_cumulants(cums: np.ndarray, corr: np.ndarray) -> MomentSummary:
    """Assemble a MomentSummary from an (n, 4) cumulant block and correlations."""
    cums = np.atleast_2d(cums)
    c2 = cums[:, 1]
    return MomentSummary(
        mean=cums[:, 0],
        sd=np.sqrt(c2),
        skewness=cums[:, 2] / c2 ** 1.5,
        ex_kurtosis=cums[:, 3] / c2 ** 2,
        corr=np.asarray(corr, dtype=float),
    )


# ---------------------------------------------------------------------------
# analytic formulas
# ---------------------------------------------------------------------------

def _nmv_cumulants(mu, theta, sig2, sub: np.ndarray) -> np.ndarray:
    """Margin cumulants of mu + theta*S + sigma*W(S) from subordinator cumulants."""
    s1, s2, s3, s4 = sub
    c1 = mu + theta * s1
    c2 = s1 * sig2 + s2 * theta ** 2
    c3 = 3 * s2 * theta * sig2 + s3 * theta ** 3
    c4 = 3 * s2 * sig2 ** 2 + 6 * s3 * theta ** 2 * sig2 + s4 * theta ** 4
    return np.stack([c1, c2, c3, c4], axis=-1)


def _corr_from_cov(cov: np.ndarray) -> np.ndarray:
    d = np.sqrt(np.diag(cov))
    return cov / np.outer(d, d)


def analytic_margin_cumulants(params) -> np.ndarray:
    """(n, 4) array of the first four cumulants of each margin at t=1."""
    if isinstance(params, mdl.MNormalParams):
        n = params.n
        out = np.zeros((n, 4))
        out[:, 0] = params.mu
        out[:, 1] = np.diag(params.Sigma)
        return out

    if isinstance(params, (mdl.MghParams, mdl.MntsParams)):
        sub = (params.mixing.cumulants() if isinstance(params, mdl.MghParams)
               else params.subordinator.cumulants())
        return _nmv_cumulants(params.mu, params.theta, np.diag(params.Sigma), sub)

    if isinstance(params, (mdl.AlphaGhParams, mdl.RhoAlphaGhParams)):
        chi, psi = params.chi, params.psi
        if np.all(chi > 0) and np.all(psi > 0):
            # all margins share the Bessel orders: one vectorized call
            omega = np.sqrt(chi * psi)
            kv = bessel_k(params.epsilon + np.arange(5.0)[None, :],
                          omega[:, None])
            raw = ((chi[:, None] / psi[:, None]) ** (np.arange(1, 5) / 2.0)
                   * kv[:, 1:] / kv[:, :1])
            sub = mdl._raw_to_cumulants(raw.T)
            return _nmv_cumulants(params.mu, params.theta,
                                  params.sigma ** 2, sub)
        out = np.empty((params.n, 4))
        for j in range(params.n):
            sub = mdl.GigLaw(params.epsilon, chi[j], psi[j]).cumulants()
            out[j] = _nmv_cumulants(params.mu[j], params.theta[j],
                                    params.sigma[j] ** 2, sub)
        return out

    if isinstance(params, mdl.MixedTsParams):
        # Y_j = mu + beta*V + M(V) with V ~ Gamma(c + nbar, m) and M the
        # standardized CTS process; chain rule on the cumulant generating
        # function K_V(s*beta + K_X(s)).
        shape = params.c + params.nbar
        m = params.m
        beta = params.beta
        kv = shape[:, None] * np.array([1, 1, 2, 6]) / m[:, None] ** np.arange(1, 5)
        cX = np.stack([params.component(j).cumulants() for j in range(params.n)])
        c3x, c4x = cX[:, 2], cX[:, 3]
        c1 = params.mu + kv[:, 0] * beta
        c2 = kv[:, 1] * beta ** 2 + kv[:, 0]
        c3 = kv[:, 2] * beta ** 3 + 3 * kv[:, 1] * beta + kv[:, 0] * c3x
        c4 = (kv[:, 3] * beta ** 4 + 6 * kv[:, 2] * beta ** 2
              + kv[:, 1] * (3 + 4 * beta * c3x) + kv[:, 0] * c4x)
        return np.stack([c1, c2, c3, c4], axis=-1)

    if isinstance(params, mdl.MgvgParams):
        k, q, p = params.k, params.q, params.p
        ghat = np.stack([
            np.ones_like(k),
            (1 - k) * q + 2 * k * p,
            2 * (1 - k) * q ** 2 + 6 * k * p ** 2,
            6 * (1 - k) * q ** 3 + 24 * k * p ** 3,
        ], axis=-1)
        out = np.empty((params.n, 4))
        for j in range(params.n):
            out[j] = _nmv_cumulants(params.mu[j], params.theta[j],
                                    params.sigma[j] ** 2, ghat[j])
        return out

    if isinstance(params, mdl.LinearIcaParams):
        comp = np.stack([params.component_cumulants(l) for l in range(params.n)])
        z = cumulants_of_linear_combination(params.A, comp)
        powers = params.sigma[:, None] ** np.arange(1, 5)
        out = z * powers
        out[:, 0] += params.mu
        return out

    if isinstance(params, mdl.LinearPcaParams):
        common = params.common.cumulants()
        out = np.stack([law.cumulants() for law in params.idiosyncratic])
        out += params.f[:, None] ** np.arange(1, 5) * common
        return out

    raise TypeError(f"unsupported parameter type {type(params).__name__}")


def analytic_correlation(params, margin_cumulants=None) -> np.ndarray:
    """Model correlation matrix at t=1.

    margin_cumulants, when given, must be analytic_margin_cumulants(params)
    (passed by callers that already computed it).
    """
    def margin_var():
        cums = (analytic_margin_cumulants(params) if margin_cumulants is None
                else margin_cumulants)
        return cums[:, 1]

    if isinstance(params, mdl.MNormalParams):
        return _corr_from_cov(params.Sigma)

    if isinstance(params, (mdl.MghParams, mdl.MntsParams)):
        sub = (params.mixing.cumulants() if isinstance(params, mdl.MghParams)
               else params.subordinator.cumulants())
        cov = sub[0] * params.Sigma + sub[1] * np.outer(params.theta, params.theta)
        return _corr_from_cov(cov)

    if isinstance(params, (mdl.AlphaGhParams, mdl.RhoAlphaGhParams)):
        var = margin_var()
        th_psi = params.theta / params.psi
        cov = 4 * params.a * np.outer(th_psi, th_psi)
        if isinstance(params, mdl.RhoAlphaGhParams):
            s = params.sigma / np.sqrt(params.psi)
            cov = cov + 2 * params.a * np.outer(s, s) * params.Omega_rho
        np.fill_diagonal(cov, var)
        return _corr_from_cov(cov)

    if isinstance(params, mdl.MixedTsParams):
        var = margin_var()
        bm = params.beta / params.m
        cov = params.nbar * np.outer(bm, bm)
        np.fill_diagonal(cov, var)
        return _corr_from_cov(cov)

    if isinstance(params, mdl.MgvgParams):
        var = margin_var()
        s, th = params.sigma, params.theta
        q, p = params.q, params.p
        sq, sp = np.sqrt(q), np.sqrt(p)
        cov = (np.outer(s, s) * params.Omega_rho
               * (params.c1 * np.outer(sq, sq) + params.c2 * np.outer(sp, sp))
               + np.outer(th, th) * (params.c1 * np.outer(q, q)
                                     + 2 * params.c2 * np.outer(p, p)))
        np.fill_diagonal(cov, var)
        return _corr_from_cov(cov)

    if isinstance(params, mdl.LinearIcaParams):
        # sources standardized and independent: cov(Z) = AA'
        return _corr_from_cov(params.A @ params.A.T)

    if isinstance(params, mdl.LinearPcaParams):
        var = margin_var()
        var_common = params.common.cumulants()[1]
        cov = np.outer(params.f, params.f) * var_common
        np.fill_diagonal(cov, var)
        return _corr_from_cov(cov)

    raise TypeError(f"unsupported parameter type {type(params).__name__}")


def analytic_moments(params) -> MomentSummary:
    """Mean/sd/skewness/excess-kurtosis per margin plus model correlations."""
    bad = params.validate()
    if bad:
        raise ValueError("invalid parameters: " + "; ".join(bad))
    cums = analytic_margin_cumulants(params)
    return summary_from_cumulants(cums, analytic_correlation(params, cums))


def cumulants_of_linear_combination(A, component_cumulants) -> np.ndarray:
    """Cumulants of Y = A X for independent X: c_k(Y_j) = sum_l A_jl^k c_k(X_l)."""
    A = np.asarray(A, dtype=float)
    comp = np.atleast_2d(np.asarray(component_cumulants, dtype=float))
    if A.ndim != 2 or comp.shape != (A.shape[1], 4):
        raise ValueError("A must be (n, m) with component cumulants (m, 4)")
    return np.stack([A ** k @ comp[:, k - 1] for k in range(1, 5)], axis=-1)


# ---------------------------------------------------------------------------
# numerical cumulants from a characteristic function
# ---------------------------------------------------------------------------

_STENCILS = {
    1: ([1, -1], [1.0, -1.0], 2.0),
    2: ([1, 0, -1], [1.0, -2.0, 1.0], 1.0),
    3: ([2, 1, -1, -2], [1.0, -2.0, 2.0, -1.0], 2.0),
    4: ([2, 1, 0, -1, -2], [1.0, -4.0, 6.0, -4.0, 1.0], 1.0),
}


def _richardson(diffs: np.ndarray) -> tuple[float, float]:
    """Extrapolate central-difference estimates D(h_i), h_i = h0/2^i.

    Returns the last diagonal entry and a spread-based error estimate.
    """
    levels = len(diffs)
    tab = np.array(diffs, dtype=complex)
    prev = tab[-1]
    for j in range(1, levels):
        tab = (4.0 ** j * tab[1:] - tab[:-1]) / (4.0 ** j - 1)
        if len(tab) > 1:
            prev = tab[-1]
    return tab[-1], abs(tab[-1] - prev)


_LADDER = 3.2 / 2.0 ** np.arange(11)  # coarse-to-fine steps in sd units


def _unwrapped_log_on_ray(psi_of_t, t_nodes: np.ndarray) -> np.ndarray:
    """log psi at the requested ray offsets with a continuous phase branch.

    psi_of_t evaluates the characteristic function along a ray through the
    origin (t >= 0); negative offsets use conjugate symmetry. The phase is
    tracked on a dense auxiliary grid after removing the dominant linear
    trend, so winding from large mean/sd ratios or strong skew is resolved
    without losing precision at the node points themselves.
    """
    t_nodes = np.asarray(t_nodes, dtype=float)
    t_abs = np.abs(t_nodes)
    t_max = float(t_abs.max())
    n_dense = 2048
    while True:
        t_all = np.unique(np.concatenate([np.linspace(0.0, t_max, n_dense + 1), t_abs]))
        vals = np.asarray(psi_of_t(t_all), dtype=complex)
        if np.any(~np.isfinite(vals)) or np.any(np.abs(vals) < 1e-300):
            raise ValueError("characteristic function not finite on the ray")
        slope = float(np.angle(vals[1])) / float(t_all[1])  # linear-phase proxy
        resid = np.angle(vals * np.exp(-1j * slope * t_all))
        jumps = np.abs(np.diff(resid))
        if np.max(np.minimum(jumps, 2 * np.pi - jumps)) < np.pi / 2 or n_dense >= 2 ** 15:
            break
        n_dense *= 2
    phase = np.unwrap(resid) + slope * t_all
    logvals = np.log(np.abs(vals)) + 1j * phase
    idx = np.searchsorted(t_all, t_abs)
    out = logvals[idx]
    return np.where(t_nodes < 0, np.conj(out), out)


def _best_window(raw: np.ndarray, order: int, window: int = 5):
    """Pick the most self-consistent Richardson window from ladder estimates.

    Coarse windows suffer truncation, fine ones roundoff (noise ~ eps/h^order);
    the agreement of the last two extrapolation diagonals arbitrates.
    """
    best, best_err = raw[0], np.inf
    for length in range(window, window + 4):
        for i in range(len(_LADDER) - length + 1):
            val, err = _richardson(raw[i:i + length])
            # last-correction error estimates understate stalled expansions;
            # the roundoff floor of the finest step is trustworthy, so weight
            # the extrapolation residual up before comparing
            err = max(30 * err, 1e-13 / _LADDER[i + length - 1] ** order)
            if err < best_err:
                best, best_err = val, err
    return best


def _derivatives_of_log(char_fn_1d, scale: float) -> np.ndarray:
    """Derivatives 1..4 of log psi(u) at u=0, computed in sd-rescaled units."""
    v_pos = np.unique(np.concatenate([_LADDER, 2 * _LADDER]))
    logs = _unwrapped_log_on_ray(lambda t: char_fn_1d(t / scale), v_pos)
    table = dict(zip(v_pos, logs))

    def g(v):
        return np.conj(table[-v]) if v < 0 else (0.0 if v == 0 else table[v])

    out = np.empty(4, dtype=complex)
    for order in (1, 2, 3, 4):
        offsets, weights, denom = _STENCILS[order]
        raw = np.array([
            sum(w * g(o * h) for o, w in zip(offsets, weights)) / (denom * h ** order)
            for h in _LADDER])
        out[order - 1] = _best_window(raw, order)
    return out


def numerical_cumulants(char_fn_1d, *, scale: float | None = None) -> np.ndarray:
    """First four cumulants by Richardson-extrapolated central differences
    of log psi at 0.

    The frequency axis is internally rescaled by the standard deviation
    (coarse estimate refined by a numerical second cumulant) so step sizes
    are meaningful for any return magnitude.
    """
    if scale is None:
        scale = _estimate_sd(char_fn_1d)
    c2 = (_derivatives_of_log(char_fn_1d, scale)[1] / 1j ** 2).real * scale ** 2
    if c2 > 0:
        scale = float(np.sqrt(c2))
    der = _derivatives_of_log(char_fn_1d, scale)
    orders = np.arange(1, 5)
    return (der / 1j ** orders).real * scale ** orders


def _estimate_sd(char_fn_1d) -> float:
    """Coarse standard deviation from the decay of |psi|."""
    u = 1.0
    for _ in range(200):
        mod = abs(complex(np.asarray(char_fn_1d(np.array([u])), dtype=complex).ravel()[0]))
        if mod < 0.2:
            u /= 2.0
        elif mod > 0.8:
            u *= 2.0
        else:
            break
    else:
        raise ValueError("could not bracket the characteristic-function decay scale")
    # |psi(u)| ~ exp(-0.5 sd^2 u^2) as a Gaussian proxy
    mod = abs(complex(np.asarray(char_fn_1d(np.array([u])), dtype=complex).ravel()[0]))
    return float(np.sqrt(-2.0 * np.log(mod)) / u)


def numerical_cross_cumulant(char_fn_2d, scale_j: float, scale_k: float,
                             *, window: int = 5) -> float:
    """Mixed second cumulant cov(Y_j, Y_k) from a bivariate char. fn.

    char_fn_2d(uj, uk) evaluates the joint characteristic function at the
    pair; arguments are arrays of equal shape.
    """
    # cross stencil reduces to real parts along the (+,+) and (+,-) rays
    g_pp = _unwrapped_log_on_ray(lambda t: char_fn_2d(t / scale_j, t / scale_k), _LADDER)
    g_pm = _unwrapped_log_on_ray(lambda t: char_fn_2d(t / scale_j, -t / scale_k), _LADDER)
    raw = -(g_pp - g_pm).real / (2 * _LADDER ** 2)
    best = _best_window(raw.astype(complex), 2, window)
    return float(best.real * scale_j * scale_k)


# ---------------------------------------------------------------------------
# sample moments
# ---------------------------------------------------------------------------

def empirical_moments(panel) -> MomentSummary:
    """Sample moments: sd with T-1 denominator, skew/kurtosis with T."""
    returns = np.asarray(getattr(panel, "returns", panel), dtype=float)
    returns = np.atleast_2d(returns.T).T  # promote 1-D series to a column
    T = returns.shape[0]
    if T < 4:
        raise ValueError("need at least 4 observations")
    mean = returns.mean(axis=0)
    centered = returns - mean
    var_b = (centered ** 2).mean(axis=0)
    if np.any(var_b <= 0):
        raise ValueError("zero-variance margin")
    sd = returns.std(axis=0, ddof=1)
    skew = (centered ** 3).mean(axis=0) / var_b ** 1.5
    kurt = (centered ** 4).mean(axis=0) / var_b ** 2 - 3.0
    corr = np.corrcoef(returns, rowvar=False)
    corr = np.atleast_2d(corr)
    return MomentSummary(mean=mean, sd=sd, skewness=skew,
                         ex_kurtosis=kurt, corr=corr)
