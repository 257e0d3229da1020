"""EM for the mixture families: posterior sanity, monotone likelihood, recovery."""
import numpy as np
import pytest

from levymv import models as mdl
from levymv import moments as mo
from levymv.fit_em import fit_em, loglik, posterior_weights
from levymv.density import nmv_mixture_pdf
from levymv.sampling import sample_model
from conftest import draw_params


class TestLoglik:
    def test_matches_quadrature_density(self, rng):
        p = draw_params("MGH", 2, rng)
        Y = sample_model(p, 30, seed=1)
        ll = loglik(Y, p)
        direct = sum(np.log(nmv_mixture_pdf(y, p)) for y in Y)
        assert ll == pytest.approx(direct, rel=1e-8)

    def test_mnts_matches_quadrature_density(self, rng):
        p = draw_params("MNTS", 2, rng)
        Y = sample_model(p, 20, seed=2)
        ll = loglik(Y, p)
        direct = sum(np.log(nmv_mixture_pdf(y, p)) for y in Y)
        assert ll == pytest.approx(direct, rel=1e-5)

    def test_unsupported_family(self, rng):
        p = draw_params("MGVG", 2, rng)
        with pytest.raises(TypeError):
            loglik(np.zeros((10, 2)), p)


class TestPosterior:
    @pytest.mark.parametrize("family", ["MGH", "MNTS"])
    def test_weights_positive_and_jensen(self, family, rng):
        p = draw_params(family, 2, rng)
        Y = sample_model(p, 200, seed=3)
        delta, eta, _ = posterior_weights(Y, p)
        assert np.all(delta > 0) and np.all(eta > 0)
        # Jensen: E[1/S|Y] * E[S|Y] >= 1 pointwise
        assert np.all(delta * eta >= 1 - 1e-10)

    def test_mgh_posterior_mean_consistent(self, rng):
        # averaged over draws from the model, E[S|Y] should recover E[S]
        p = draw_params("MGH", 2, rng)
        Y = sample_model(p, 50_000, seed=4)
        _, eta, _ = posterior_weights(Y, p)
        mean_s = mdl.GigLaw(p.epsilon, p.chi, p.psi).cumulants()[0]
        assert eta.mean() == pytest.approx(mean_s, rel=0.03)


class TestFitEm:
    @pytest.mark.parametrize("family,iters", [("MGH", 25), ("MNTS", 6)])
    def test_loglik_monotone(self, family, iters, rng):
        p = draw_params(family, 2, rng)
        Y = sample_model(p, 400, seed=5)
        _, trace = fit_em(Y, family, max_iter=iters)
        assert np.all(np.diff(trace) >= -1e-8)

    def test_mgh_recovers_moments(self, rng):
        p = draw_params("MGH", 2, rng)
        Y = sample_model(p, 4_000, seed=6)
        fitted, trace = fit_em(Y, "MGH", max_iter=200)
        assert loglik(Y, fitted) >= trace[0]
        got = mo.analytic_moments(fitted)
        emp = mo.empirical_moments(Y)
        assert np.max(np.abs(got.sd / emp.sd - 1)) < 0.05
        assert abs(got.corr[0, 1] - emp.corr[0, 1]) < 0.05

    def test_needs_enough_rows(self):
        with pytest.raises(ValueError):
            fit_em(np.zeros((5, 3)), "MGH")
