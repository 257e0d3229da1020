"""Linear-model estimators and the two-step estimators.

FastICA (logcosh contrast, symmetric decorrelation) and first-component
PCA factorize the panel; univariate maximum likelihood with FFT-inverted
densities fits the component laws. The two-step estimators fit margins
by univariate MLE first and then the dependence parameters against the
empirical correlation matrix, leaving the margins frozen.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as _gamma_fn

from . import fit_moments as fmo
from . import models as mdl
from . import moments as mo
from .density import pdf_from_char_fn
from .numerics import minimize_bounded

__all__ = [
    "IcaDecomposition", "PcaDecomposition", "standardize", "fastica",
    "pca_first_component", "fit_univariate_mle", "fit_two_step",
    "fit_linear_ica", "fit_linear_pca",
]


# ---------------------------------------------------------------------------
# decompositions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IcaDecomposition:
    """Mixing matrix A and unit-variance sources X with Z = X A'."""

    A: np.ndarray           # (n, n) mixing matrix
    X: np.ndarray           # (T, n) source series
    whitening: np.ndarray   # (n, n) whitening matrix K with X_w = Z K'
    unmixing: np.ndarray    # (n, n) rotation W on the whitened panel
    sweeps: int
    seed: int


@dataclass(frozen=True)
class PcaDecomposition:
    """First principal component split: Y = mean + f*factor + residuals."""

    loadings: np.ndarray    # (n,) loadings on the unit-variance factor
    factor: np.ndarray      # (T,)
    residuals: np.ndarray   # (T, n)
    mean: np.ndarray        # (n,)


def standardize(panel):
    """(Z, mu, sigma): margins centered and scaled to unit sample variance."""
    Y = np.asarray(getattr(panel, "returns", panel), dtype=float)
    mu = Y.mean(axis=0)
    sigma = Y.std(axis=0, ddof=1)
    if np.any(sigma <= 0):
        raise ValueError("degenerate margin: zero sample variance")
    return (Y - mu) / sigma, mu, sigma


def _sym_inv_sqrt(M: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(M)
    if vals[0] <= 0:
        raise np.linalg.LinAlgError("matrix not positive definite")
    return vecs @ np.diag(vals ** -0.5) @ vecs.T


def fastica(Z, seed: int = 0, tol: float = 1e-6,
            max_sweeps: int = 500) -> IcaDecomposition:
    """Symmetric fixed-point ICA with the logcosh (tanh) contrast.

    Sources are canonicalized to positive third sample moment (falling
    back to a positive max-abs mixing entry when the skew is negligible).
    """
    Z = np.asarray(Z, dtype=float)
    T, n = Z.shape
    cov = np.cov(Z, rowvar=False)
    K = _sym_inv_sqrt(cov)
    Xw = Z @ K.T  # whitened: unit sample covariance

    rng = np.random.default_rng(seed)
    W = np.linalg.qr(rng.normal(size=(n, n)))[0]
    for sweep in range(1, max_sweeps + 1):
        S = Xw @ W.T
        G = np.tanh(S)
        W_new = (G.T @ Xw) / T - np.diag((1.0 - G ** 2).mean(axis=0)) @ W
        W_new = _sym_inv_sqrt(W_new @ W_new.T) @ W_new
        drift = float(np.max(np.abs(np.abs(np.sum(W_new * W, axis=1)) - 1.0)))
        W = W_new
        if drift < tol:
            break
    else:
        raise RuntimeError("FastICA did not converge in "
                           f"{max_sweeps} sweeps (drift {drift:.2e}); "
                           "sources may be Gaussian")

    X = Xw @ W.T
    A = np.linalg.inv(W @ K)
    kurt = (X ** 4).mean(axis=0) - 3.0
    if np.all(np.abs(kurt) < 0.05):
        warnings.warn("all sources look Gaussian; the rotation is "
                      "arbitrary", RuntimeWarning)
    skew = (X ** 3).mean(axis=0)
    for l in range(n):
        flip = skew[l] < 0 if abs(skew[l]) > 1e-3 \
            else A[np.argmax(np.abs(A[:, l])), l] < 0
        if flip:
            X[:, l] = -X[:, l]
            A[:, l] = -A[:, l]
    return IcaDecomposition(A=A, X=X, whitening=K, unmixing=W,
                            sweeps=sweep, seed=seed)


def pca_first_component(panel) -> PcaDecomposition:
    """Leading-eigenvector factor with unit sample variance; loadings
    absorb the scale, so residuals are exactly factor-orthogonal."""
    Y = np.asarray(getattr(panel, "returns", panel), dtype=float)
    T, n = Y.shape
    if T <= n:
        raise ValueError("need more observations than margins")
    mean = Y.mean(axis=0)
    cov = np.cov(Y, rowvar=False)
    vals, vecs = np.linalg.eigh(cov)
    if vals[-1] <= 0:
        raise ValueError("degenerate covariance")
    if n > 1 and vals[-2] > (1 - 1e-10) * vals[-1]:
        raise ValueError("leading eigenvalue is not simple; "
                         "first principal component undefined")
    v = vecs[:, -1]
    v = v if v[np.argmax(np.abs(v))] > 0 else -v
    raw = (Y - mean) @ v
    scale = raw.std(ddof=1)
    factor = raw / scale
    loadings = v * scale
    residuals = Y - mean - np.outer(factor, loadings)
    return PcaDecomposition(loadings=loadings, factor=factor,
                            residuals=residuals, mean=mean)


# ---------------------------------------------------------------------------
# univariate maximum likelihood
# ---------------------------------------------------------------------------

def _lg_exponent(ap: float, am: float, v):
    """Standardized gamma-difference exponent (scale-free in lambda)."""
    dp = np.sqrt(am / (ap * (ap + am)))
    dm = np.sqrt(ap / (am * (ap + am)))
    v = np.asarray(v, dtype=float)
    return (-ap * np.log1p(-1j * dp * v) - am * np.log1p(1j * dm * v))


def _gvg_margin(x) -> mdl.MgvgParams:
    """One-margin MGVG container; c1, c2 cancel from the margin law."""
    m, th, s, k, q, p = x
    return mdl.MgvgParams(mu=[m], theta=[th], sigma=[s], k=[k], q=[q],
                          p=[p], c1=0.5 * (1 - k) / q, c2=0.5 * k / p,
                          Omega_rho=np.eye(1))


def _fft_loglik(char_fn_1d, y: np.ndarray, mean: float, sd: float) -> float:
    """Sum of log densities with one grid-widening retry on underflow."""
    hw = max(20.0, 1.25 * float(np.max(np.abs(y - mean))) / sd)
    for factor in (1.0, 3.0):
        table = pdf_from_char_fn(char_fn_1d, mean=mean, sd=sd,
                                 half_width_sds=hw * factor)
        p = table.pdf_at(y)
        if np.all(p > 0):
            return float(np.sum(np.log(p)))
    raise ValueError("density underflow at some observations")


def _mle_box(y, negll, x0, lower, upper, max_iter):
    def guarded(x):
        try:
            v = negll(x)
        except (ValueError, OverflowError, FloatingPointError,
                np.linalg.LinAlgError, RuntimeError):
            return 1e15
        return v if np.isfinite(v) else 1e15
    res = minimize_bounded(guarded, np.clip(x0, lower, upper), lower, upper,
                           max_iter=max_iter, tol=1e-12)
    return res.x, -res.value


def _gh_negll(y):
    def negll(x):
        eps, chi, psi, m, th, s = x
        from .fit_em import loglik as em_loglik
        par = mdl.MghParams(epsilon=eps, chi=chi, psi=psi, mu=[m],
                            theta=[th], Sigma=[[s * s]])
        return -em_loglik(y[:, None], par)
    return negll


def _cts_alpha_boxes(lower, upper, x0, idx):
    """Split the alpha coordinate around its pole at 1; best box wins."""
    boxes = []
    for lo_a, hi_a, start_a in ((0.05, 0.95, 0.5), (1.05, 1.95, 1.5)):
        lo, hi, st = lower.copy(), upper.copy(), x0.copy()
        lo[idx], hi[idx] = lo_a, hi_a
        st[idx] = np.clip(x0[idx], lo_a + 1e-3, hi_a - 1e-3) \
            if lo_a <= x0[idx] <= hi_a else start_a
        boxes.append((lo, hi, st))
    return boxes


def _sym_cts_rate(alpha: float, c4: float) -> float:
    """Tempering rate of a symmetric law matching the excess kurtosis."""
    r = _gamma_fn(4 - alpha) / _gamma_fn(2 - alpha) / max(c4, 1e-3)
    return float(np.clip(np.sqrt(r), 0.1, 100.0))


def _series_cumulants(y: np.ndarray) -> np.ndarray:
    m = y.mean()
    d = y - m
    c2 = d.var()
    c3 = (d ** 3).mean()
    c4 = (d ** 4).mean() - 3 * c2 ** 2
    return np.array([m, c2, c3, c4])


def fit_univariate_mle(series, family: str, *, epsilon: float | None = None,
                       max_iter: int = 150):
    """MLE of a one-dimensional law; returns (params, loglik).

    family: "GH" (free or fixed-epsilon generalized hyperbolic), "NIG"
    (epsilon fixed at -1/2), "stdCTS", "LG" (standardized gamma
    difference), "GVG-margin", "CTS". The optimizer starts from a
    moment-matched point, so the result is never worse than it.
    """
    y = np.asarray(series, dtype=float).ravel()
    if len(y) < 50:
        raise ValueError("need at least 50 observations")
    c = _series_cumulants(y)
    m1, sd = c[0], float(np.sqrt(c[1]))
    kurt = c[3] / c[1] ** 2

    if family in ("GH", "NIG"):
        lower = np.array([-5.0, 1e-8, 1e-8, m1 - 10 * sd, -5 * sd, 1e-6 * sd])
        upper = np.array([5.0, 1e3, 1e3, m1 + 10 * sd, 5 * sd, 10 * sd])
        x0 = np.array([-0.5, 1.0, 1.0, m1, 0.0, sd])
        if family == "NIG":
            epsilon = -0.5
        if epsilon is not None:
            lower[0] = upper[0] = x0[0] = epsilon
        x, ll = _mle_box(y, _gh_negll(y), x0, lower, upper, max_iter)
        par = mdl.MghParams(epsilon=x[0], chi=x[1], psi=x[2], mu=[x[3]],
                            theta=[x[4]], Sigma=[[x[5] ** 2]])
        return par, ll

    if family == "stdCTS":
        lower = np.array([0.05, 1e-2, 1e-2])
        upper = np.array([1.95, 1e3, 1e3])

        def negll(x):
            law = mdl.StdCtsLaw(*x)
            return -_fft_loglik(lambda u: np.exp(law.exponent(u)), y, 0.0, 1.0)

        best = (None, -np.inf)
        for a0 in (0.5, 1.5):
            lam = _sym_cts_rate(a0, kurt)
            boxes = _cts_alpha_boxes(lower, upper, np.array([a0, lam, lam]), 0)
            box = boxes[0] if a0 < 1 else boxes[1]
            x, ll = _mle_box(y, negll, box[2], box[0], box[1], max_iter)
            if ll > best[1]:
                best = (mdl.StdCtsLaw(*x), ll)
        return best

    if family == "LG":
        a0 = 3.0 / max(kurt, 0.05)

        def negll(x):
            return -_fft_loglik(lambda u: np.exp(_lg_exponent(x[0], x[1], u)),
                                y, 0.0, 1.0)
        x, ll = _mle_box(y, negll, np.array([a0, a0]),
                         np.array([1e-2, 1e-2]), np.array([1e3, 1e3]),
                         max_iter)
        return (1.0, float(x[0]), float(x[1])), ll

    if family == "GVG-margin":
        lower = np.array([m1 - 10 * sd, -5 * sd, 1e-6 * sd, 1e-4, 1e-3, 1e-3])
        upper = np.array([m1 + 10 * sd, 5 * sd, 10 * sd, 1 - 1e-4, 1e3, 1e3])
        x0 = np.array([m1, 0.0, sd, 0.5, 1.0, 1.0])

        def negll(x):
            par = _gvg_margin(x)
            cm = mo.analytic_margin_cumulants(par)[0]
            return -_fft_loglik(lambda u: par.marginal_char_fn(0, u), y,
                                cm[0], float(np.sqrt(cm[1])))
        x, ll = _mle_box(y, negll, x0, lower, upper, max_iter)
        return _gvg_margin(x), ll

    if family == "CTS":
        lower = np.array([0.05, 1e-2, 1e-2, 1e-8, m1 - 10 * sd])
        upper = np.array([1.95, 1e3, 1e3, 1e3, m1 + 10 * sd])

        def negll(x):
            law = mdl.CtsLaw(*x)
            cm = law.cumulants()
            return -_fft_loglik(lambda u: np.exp(law.exponent(u)), y,
                                cm[0], float(np.sqrt(cm[1])))

        best = (None, -np.inf)
        for a0 in (0.5, 1.5):
            lam = _sym_cts_rate(a0, kurt)
            C = c[1] * lam ** (2 - a0) / (2 * _gamma_fn(2 - a0))
            boxes = _cts_alpha_boxes(lower, upper,
                                     np.array([a0, lam, lam, C, m1]), 0)
            box = boxes[0] if a0 < 1 else boxes[1]
            x, ll = _mle_box(y, negll, box[2], box[0], box[1], max_iter)
            if ll > best[1]:
                best = (mdl.CtsLaw(*x), ll)
        return best

    raise ValueError(f"unknown univariate family {family!r}")


# ---------------------------------------------------------------------------
# two-step estimators
# ---------------------------------------------------------------------------

def _corr_distance(params, corr_target: np.ndarray) -> float:
    try:
        rho = mo.analytic_correlation(params)
    except (ValueError, OverflowError, FloatingPointError,
            np.linalg.LinAlgError):
        return 1e10
    if not np.all(np.isfinite(rho)):
        return 1e10
    return float(np.linalg.norm(rho - corr_target, "fro"))


def _warn_if_boundary(x, lower, upper, names):
    hits = [nm for v, lo, hi, nm in zip(x, lower, upper, names)
            if v - lo < 1e-4 * (hi - lo) or hi - v < 1e-4 * (hi - lo)]
    if hits:
        warnings.warn("dependence fit at parameter boundary: "
                      + ", ".join(hits), RuntimeWarning)


def _fit_gh_margins(Y: np.ndarray, max_iter: int):
    """Shared-shape generalized hyperbolic margins: free fits pick the
    common epsilon, then every margin is refit with it frozen."""
    n = Y.shape[1]
    free = [fit_univariate_mle(Y[:, j], "GH")[0] for j in range(n)]
    eps = float(np.clip(np.mean([p.epsilon for p in free]), 0.1, 5.0))
    fixed = [fit_univariate_mle(Y[:, j], "GH", epsilon=eps,
                                max_iter=max_iter)[0] for j in range(n)]
    chi = np.array([max(p.chi, 0.0) for p in fixed])
    psi = np.array([p.psi for p in fixed])
    mu = np.array([p.mu[0] for p in fixed])
    theta = np.array([p.theta[0] for p in fixed])
    sigma = np.array([np.sqrt(p.Sigma[0, 0]) for p in fixed])
    return eps, chi, psi, mu, theta, sigma


def fit_two_step(panel, family: str, max_iter: int = 150,
                 step2_max_iter: int = 300):
    """Margins by univariate MLE, then the dependence parameters by
    minimizing the Frobenius gap to the empirical correlation matrix."""
    Y = np.asarray(getattr(panel, "returns", panel), dtype=float)
    T, n = Y.shape
    corr = np.corrcoef(Y, rowvar=False)
    n_ang = n * (n - 1) // 2

    if family in ("AlphaGH", "RhoAlphaGH"):
        eps, chi, psi, mu, theta, sigma = _fit_gh_margins(Y, max_iter)
        a_lo, a_hi = 1e-6, eps - 1e-6
        if family == "AlphaGH":
            def build(x):
                return mdl.AlphaGhParams(epsilon=eps, a=x[0], chi=chi,
                                         psi=psi, mu=mu, theta=theta,
                                         sigma=sigma)
            lower, upper = np.array([a_lo]), np.array([a_hi])
            x0 = np.array([eps / 2])
            names = ["a"]
        else:
            def build(x):
                O = fmo.hypersphere_to_corr(x[1:], n)
                return mdl.RhoAlphaGhParams(epsilon=eps, a=x[0], chi=chi,
                                            psi=psi, mu=mu, theta=theta,
                                            sigma=sigma, Omega_rho=O)
            lower = np.concatenate([[a_lo], np.full(n_ang, 1e-6)])
            upper = np.concatenate([[a_hi], np.full(n_ang, np.pi - 1e-6)])
            x0 = np.concatenate([[eps / 2],
                                 np.clip(fmo.corr_to_angles(corr), 1e-6,
                                         np.pi - 1e-6)])
            names = ["a"] + [f"angle{i}" for i in range(n_ang)]

        res = minimize_bounded(lambda x: _corr_distance(build(x), corr) ** 2,
                               x0, lower, upper, max_iter=step2_max_iter,
                               tol=1e-16)
        _warn_if_boundary(res.x, lower, upper, names)
        return build(res.x)

    if family == "MGVG":
        margins = [fit_univariate_mle(Y[:, j], "GVG-margin",
                                      max_iter=max_iter)[0]
                   for j in range(n)]
        mu = np.array([p.mu[0] for p in margins])
        theta = np.array([p.theta[0] for p in margins])
        sigma = np.array([p.sigma[0] for p in margins])
        k = np.array([p.k[0] for p in margins])
        q = np.array([p.q[0] for p in margins])
        p_ = np.array([p.p[0] for p in margins])
        c1_max = float(np.min((1 - k) / q))
        c2_max = float(np.min(k / p_))

        def build(x):
            O = fmo.hypersphere_to_corr(x[:n_ang], n)
            return mdl.MgvgParams(mu=mu, theta=theta, sigma=sigma, k=k, q=q,
                                  p=p_, c1=x[n_ang] * c1_max,
                                  c2=x[n_ang + 1] * c2_max, Omega_rho=O)
        lower = np.concatenate([np.full(n_ang, 1e-6), [1e-6, 1e-6]])
        upper = np.concatenate([np.full(n_ang, np.pi - 1e-6),
                                [1 - 1e-6, 1 - 1e-6]])
        x0 = np.concatenate([np.clip(fmo.corr_to_angles(corr), 1e-6,
                                     np.pi - 1e-6), [0.5, 0.5]])
        res = minimize_bounded(lambda x: _corr_distance(build(x), corr) ** 2,
                               x0, lower, upper, max_iter=step2_max_iter,
                               tol=1e-16)
        names = [f"angle{i}" for i in range(n_ang)] + ["c1", "c2"]
        _warn_if_boundary(res.x, lower, upper, names)
        return build(res.x)

    raise ValueError(f"two-step estimation unsupported for {family!r}")


# ---------------------------------------------------------------------------
# linear-model pipelines
# ---------------------------------------------------------------------------

def fit_linear_ica(panel, family: str, seed: int = 0,
                   max_iter: int = 150) -> mdl.LinearIcaParams:
    """Standardize, factorize with FastICA, fit each source law by MLE."""
    if family not in ("CTS", "LG"):
        raise ValueError("ICA component family must be CTS or LG")
    Z, mu, sigma = standardize(panel)
    dec = fastica(Z, seed=seed)
    components = []
    for l in range(Z.shape[1]):
        src = "stdCTS" if family == "CTS" else "LG"
        fitted, _ = fit_univariate_mle(dec.X[:, l], src, max_iter=max_iter)
        if family == "CTS":
            components.append((fitted.alpha, fitted.lam_plus,
                               fitted.lam_minus))
        else:
            components.append(fitted)
    return mdl.LinearIcaParams(source_family=family, mu=mu, sigma=sigma,
                               A=dec.A, components=tuple(components))


def _rank_one_loadings(cov: np.ndarray) -> np.ndarray:
    """Loadings from off-diagonal covariances only: with a unit-variance
    factor, cov[j,k] = f_j f_k for j != k, so f_j^2 = c_jk c_jl / c_kl.
    Unlike the leading eigenvector this is unbiased under heterogeneous
    idiosyncratic variances."""
    n = cov.shape[0]
    if n < 3:
        raise ValueError("need at least three margins")
    ref = int(np.argmax(np.abs(cov - np.diag(np.diag(cov))).sum(axis=0)))
    f2 = np.zeros(n)
    for j in range(n):
        terms = [cov[j, k] * cov[j, l] / cov[k, l]
                 for k in range(n) for l in range(k + 1, n)
                 if j not in (k, l) and abs(cov[k, l]) > 1e-12]
        f2[j] = np.mean(terms) if terms else 0.0
    f = np.sqrt(np.clip(f2, 0.0, None))
    sign = np.sign(cov[:, ref])
    sign[ref] = 1.0
    return f * np.where(sign == 0, 1.0, sign)


def fit_linear_pca(panel, family: str = "CTS", k: int = 1,
                   max_iter: int = 150) -> mdl.LinearPcaParams:
    """Fit the factor law on the first principal component, then run one
    independent joint (loading, idiosyncratic-law) MLE per margin."""
    if family != "CTS":
        raise ValueError("PCA component family must be CTS")
    if k != 1:
        raise NotImplementedError("only one common factor is supported")
    Y = np.asarray(getattr(panel, "returns", panel), dtype=float)
    dec = pca_first_component(Y)
    common, _ = fit_univariate_mle(dec.factor, "CTS", max_iter=max_iter)
    common_cums = common.cumulants()
    try:
        f_start = _rank_one_loadings(np.cov(Y, rowvar=False))
    except ValueError:
        f_start = dec.loadings
    # the loadings are pinned by the off-diagonal covariances; express them
    # against the fitted factor variance so f_j f_k var[factor] keeps
    # matching the empirical cross-covariances
    f_start = f_start / np.sqrt(max(common_cums[1], 1e-12))

    f = np.empty(Y.shape[1])
    idio = []
    for j in range(Y.shape[1]):
        y = Y[:, j]
        cr = _series_cumulants(y - f_start[j] * dec.factor)
        sd_r = float(np.sqrt(cr[1]))
        kurt_r = cr[3] / cr[1] ** 2
        f0 = f_start[j]
        # the margin likelihood cannot split scale between the factor and
        # the idiosyncratic law reliably; the covariance-pinned loading
        # stays fixed and the MLE shapes the idiosyncratic law around it
        f_lo = f_hi = f0

        def negll(x):
            law = mdl.CtsLaw(*x[1:])
            cm = law.cumulants() + x[0] ** np.arange(1, 5) * common_cums

            def cf(u):
                u = np.asarray(u, dtype=float)
                return np.exp(common.exponent(x[0] * u) + law.exponent(u))
            return -_fft_loglik(cf, y, cm[0], float(np.sqrt(cm[1])))

        lower = np.array([f_lo, 0.05, 1e-2, 1e-2, 1e-8, cr[0] - 10 * sd_r])
        upper = np.array([f_hi, 1.95, 1e3, 1e3, 1e3, cr[0] + 10 * sd_r])
        best = (None, -np.inf)
        for a0 in (0.5, 1.5):
            lam = _sym_cts_rate(a0, kurt_r)
            C = cr[1] * lam ** (2 - a0) / (2 * _gamma_fn(2 - a0))
            x0 = np.array([f0, a0, lam, lam, C, cr[0]])
            boxes = _cts_alpha_boxes(lower, upper, x0, 1)
            box = boxes[0] if a0 < 1 else boxes[1]
            x, ll = _mle_box(y, negll, box[2], box[0], box[1], max_iter)
            if ll > best[1]:
                best = (x, ll)
        x = best[0]
        f[j] = x[0]
        idio.append(mdl.CtsLaw(*x[1:]))
    return mdl.LinearPcaParams(f=f, common=common, idiosyncratic=tuple(idio))
