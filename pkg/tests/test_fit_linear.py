"""Linear pipelines: FastICA, PCA factor, univariate MLE, two-step fits."""
import warnings

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from levymv import models as mdl
from levymv import moments as mo
from levymv.density import ks_distance, marginal_density
from levymv.fit_linear import (_rank_one_loadings, fastica, fit_linear_ica,
                               fit_linear_pca, fit_two_step,
                               fit_univariate_mle, pca_first_component,
                               standardize)
from levymv.sampling import sample_cts_law, sample_model, sample_std_cts
from conftest import draw_params


class TestStandardize:
    def test_zero_mean_unit_sd(self, rng):
        Y = rng.normal(2.0, 3.0, size=(1_000, 3))
        Z, mu, sigma = standardize(Y)
        assert np.allclose(Z.mean(axis=0), 0.0, atol=1e-12)
        assert np.allclose(Z.std(axis=0, ddof=1), 1.0, atol=1e-12)
        assert np.allclose(mu + sigma * Z, Y, atol=1e-10)


class TestFastIca:
    def _mixed_sources(self, rng, T=20_000):
        S = np.column_stack([
            rng.standard_t(5, T),
            rng.exponential(1.0, T) - 1.0,
            rng.uniform(-1, 1, T)])
        S = (S - S.mean(axis=0)) / S.std(axis=0, ddof=1)
        M = np.array([[1.0, 0.4, -0.3], [0.2, 1.0, 0.5], [-0.4, 0.3, 1.0]])
        return S, S @ M.T

    def test_reconstruction_identity(self, rng):
        S, Y = self._mixed_sources(rng)
        Z, _, _ = standardize(Y)
        dec = fastica(Z, seed=0)
        # A X reproduces the standardized panel and A A' its correlation
        assert np.max(np.abs(dec.X @ dec.A.T - Z)) < 1e-8
        corr = np.corrcoef(Z, rowvar=False)
        assert np.max(np.abs(dec.A @ dec.A.T - corr)) < 1e-8

    def test_sources_recovered_up_to_signed_permutation(self, rng):
        S, Y = self._mixed_sources(rng)
        Z, _, _ = standardize(Y)
        dec = fastica(Z, seed=0)
        C = np.abs(np.corrcoef(S, dec.X, rowvar=False)[:3, 3:])
        rows, cols = linear_sum_assignment(-C)
        assert np.all(C[rows, cols] > 0.95)

    def test_gaussian_input_warns(self, rng):
        # T large enough that sample kurtosis noise stays under the
        # near-Gaussian threshold
        Z, _, _ = standardize(rng.normal(size=(200_000, 2)))
        with pytest.warns(RuntimeWarning):
            fastica(Z, seed=1)

    def test_deterministic(self, rng):
        _, Y = self._mixed_sources(rng, T=5_000)
        Z, _, _ = standardize(Y)
        assert np.array_equal(fastica(Z, seed=3).A, fastica(Z, seed=3).A)


class TestPcaFactor:
    def test_invariants(self, rng):
        f = np.array([0.9, -0.5, 0.7])
        T = 10_000
        F = rng.normal(size=T)
        Y = np.outer(F, f) + 0.3 * rng.normal(size=(T, 3))
        dec = pca_first_component(Y)
        assert abs(dec.factor.std(ddof=1) - 1.0) < 1e-10
        # residuals are exactly orthogonal to the factor
        assert np.max(np.abs(dec.residuals.T @ dec.factor)) / T < 1e-10
        recon = dec.mean + np.outer(dec.factor, dec.loadings) + dec.residuals
        assert np.max(np.abs(recon - Y)) < 1e-10

    def test_rank_one_loadings_unbiased(self):
        # heterogeneous idiosyncratic variance biases the eigenvector route;
        # the pairwise-ratio estimator stays exact on the population matrix
        f = np.array([0.533, -0.333, 0.8])
        d = np.array([0.9, 0.05, 0.3])
        cov = np.outer(f, f) + np.diag(d)
        got = _rank_one_loadings(cov)
        assert np.max(np.abs(got - f)) < 1e-12


class TestUnivariateMle:
    def test_gh_fits_nig_sample(self, rng):
        p = mdl.MghParams(-0.5, 1.2, 2.5, [0.001], [0.01], [[0.02 ** 2]])
        y = sample_model(p, 20_000, seed=1)[:, 0]
        fitted, ll = fit_univariate_mle(y, "GH")
        assert ks_distance(y, marginal_density(fitted, 0)) < 0.02

    def test_std_cts_fit(self, rng):
        y = sample_std_cts(0.6, 6.0, 9.0, 20_000, rng)
        fitted, _ = fit_univariate_mle(y, "stdCTS")
        cums = fitted.cumulants()
        assert abs(cums[0]) < 1e-10 and abs(cums[1] - 1) < 1e-10

    def test_cts_alpha_pole_avoided(self, rng):
        law = mdl.CtsLaw(1.4, 30.0, 45.0, 2.0, 0.0)
        y = sample_cts_law(law, 15_000, rng)
        fitted, _ = fit_univariate_mle(y, "CTS")
        assert abs(fitted.alpha - 1.0) > 0.04

    def test_too_short(self):
        with pytest.raises(ValueError):
            fit_univariate_mle(np.zeros(10), "GH")


class TestTwoStep:
    def test_rho_alpha_gh(self, rng):
        p = draw_params("RhoAlphaGH", 3, rng)
        Y = sample_model(p, 4_000, seed=2)
        fitted = fit_two_step(Y, "RhoAlphaGH")
        emp = np.corrcoef(Y, rowvar=False)
        got = mo.analytic_moments(fitted).corr
        assert np.linalg.norm(got - emp, ord="fro") < 0.1
        assert 0 < fitted.a < fitted.epsilon

    def test_alpha_gh_margins_match_free_fit(self, rng):
        p = draw_params("AlphaGH", 3, rng)
        Y = sample_model(p, 3_000, seed=3)
        fitted = fit_two_step(Y, "AlphaGH")
        # step 2 must not move the margin parameters fitted in step 1
        ana = mo.analytic_margin_cumulants(fitted)
        for j in range(3):
            refit, _ = fit_univariate_mle(Y[:, j], "GH",
                                          epsilon=fitted.epsilon)
            assert refit.mu[0] == pytest.approx(fitted.mu[j], abs=1e-10)
            assert refit.chi == pytest.approx(fitted.chi[j], abs=1e-10)

    def test_unsupported_family(self, rng):
        with pytest.raises(ValueError):
            fit_two_step(rng.normal(size=(200, 2)), "MNTS")


class TestPipelines:
    def test_ica_correlation_exact(self, rng):
        p = draw_params("ICA-MLCTS", 3, rng)
        Y = sample_model(p, 6_000, seed=4)
        fitted = fit_linear_ica(Y, "CTS", seed=0)
        emp = np.corrcoef(Y, rowvar=False)
        got = mo.analytic_moments(fitted).corr
        assert np.max(np.abs(got - emp)) < 1e-10

    def test_pca_factor_dominant_panel(self, rng):
        f = np.array([0.6, -0.4, 0.8])
        common = mdl.CtsLaw(0.7, 40.0, 60.0, 2.0, 0.0)
        idio = [mdl.CtsLaw(0.9, 50.0, 50.0, 0.4, 0.0) for _ in range(3)]
        p = mdl.LinearPcaParams(f, common, idio)
        Y = sample_model(p, 20_000, seed=5)
        fitted = fit_linear_pca(Y, "CTS")
        emp = np.corrcoef(Y, rowvar=False)
        got = mo.analytic_moments(fitted).corr
        assert np.linalg.norm(got - emp, ord="fro") < 0.05
