"""Shared fixtures: random valid parameter draws per model family."""
import numpy as np
import pytest

from levymv import models as mdl

ALL_FAMILIES = ["MNormal", "MGH", "MNTS", "AlphaGH", "RhoAlphaGH",
                "MMixedTS", "MGVG", "ICA-MLCTS", "ICA-MLG", "PCA-MLCTS"]

MIXTURE_FAMILIES = ["MGH", "MNTS", "AlphaGH", "RhoAlphaGH", "MMixedTS",
                    "MGVG"]


def rand_corr(n, rng, strength=1.0):
    A = rng.normal(size=(n, n))
    C = A @ A.T + strength * n * np.eye(n)
    d = np.sqrt(np.diag(C))
    return C / np.outer(d, d)


def draw_params(family, n, rng):
    """A random valid parameter set, scaled like daily returns."""
    sig = rng.uniform(0.005, 0.03, n)
    Om = rand_corr(n, rng)
    Sigma = np.outer(sig, sig) * Om
    mu = rng.normal(0, 1e-3, n)
    theta = rng.normal(0, 0.01, n)
    if family == "MNormal":
        return mdl.MNormalParams(mu, Sigma)
    if family == "MGH":
        return mdl.MghParams(rng.uniform(-2, 3), rng.uniform(0.1, 3),
                             rng.uniform(0.1, 3), mu, theta, Sigma)
    if family == "MNTS":
        return mdl.MntsParams(rng.uniform(0.2, 1.8), rng.uniform(0.3, 5),
                              rng.uniform(0.1, 3), mu, theta, Sigma)
    if family == "AlphaGH":
        eps = rng.uniform(0.5, 4)
        return mdl.AlphaGhParams(eps, rng.uniform(0.05, 0.95) * eps,
                                 rng.uniform(0, 2, n), rng.uniform(0.5, 5, n),
                                 mu, theta, sig)
    if family == "RhoAlphaGH":
        eps = rng.uniform(0.5, 4)
        return mdl.RhoAlphaGhParams(eps, rng.uniform(0.05, 0.95) * eps,
                                    rng.uniform(0, 2, n),
                                    rng.uniform(0.5, 5, n), mu, theta, sig, Om)
    if family == "MMixedTS":
        alpha = rng.uniform(0.1, 1.9, n)
        alpha[np.abs(alpha - 1) < 0.05] = 1.3
        return mdl.MixedTsParams(mu, rng.normal(0, 0.05, n), alpha,
                                 rng.uniform(1, 20, n), rng.uniform(1, 20, n),
                                 rng.uniform(0.5, 5, n),
                                 rng.uniform(0.5, 8, n), rng.uniform(0.3, 4))
    if family == "MGVG":
        # keep (1-k)/q >= 2 so the margin char. fn. (a power law of
        # exponent -2(1-k)/q) reaches the FFT inversion threshold within
        # the widest grid
        k = rng.uniform(0.2, 0.8, n)
        q = rng.uniform(0.2, 0.5, n) * (1 - k)
        p = rng.uniform(0.2, 0.8, n) * k
        c1 = rng.uniform(0.1, 0.9) * np.min((1 - k) / q)
        c2 = rng.uniform(0.1, 0.9) * np.min(k / p)
        return mdl.MgvgParams(mu, theta, sig, k, q, p, c1, c2, Om)
    if family == "ICA-MLCTS":
        A = rand_corr(n, rng) + 0.3 * np.eye(n)
        alpha = rng.uniform(0.1, 1.9, n)
        alpha[np.abs(alpha - 1) < 0.05] = 0.6
        comps = [(alpha[j], rng.uniform(1, 15), rng.uniform(1, 15))
                 for j in range(n)]
        return mdl.LinearIcaParams("CTS", mu, sig, A, comps)
    if family == "ICA-MLG":
        A = rand_corr(n, rng) + 0.3 * np.eye(n)
        comps = [(rng.uniform(0.5, 5), rng.uniform(0.5, 5),
                  rng.uniform(0.5, 5)) for _ in range(n)]
        return mdl.LinearIcaParams("LG", mu, sig, A, comps)
    if family == "PCA-MLCTS":
        def law():
            a = rng.uniform(0.1, 1.9)
            a = 1.3 if abs(a - 1) < 0.05 else a
            return mdl.CtsLaw(a, rng.uniform(20, 120), rng.uniform(20, 120),
                              rng.uniform(0.5, 3), rng.normal(0, 1e-3))
        return mdl.LinearPcaParams(rng.normal(0, 0.3, n), law(),
                                   [law() for _ in range(n)])
    raise ValueError(family)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
