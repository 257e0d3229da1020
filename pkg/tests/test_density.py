"""FFT density inversion, mixture densities, and the diagnostics report."""
import numpy as np
import pytest
from scipy import stats

from levymv import models as mdl
from levymv.density import (DensityTable, build_report, charfn_distance,
                            cts_subordinator_density, gig_density,
                            ks_distance, marginal_density, nmv_mixture_pdf,
                            pdf_from_char_fn, report_to_csv, report_to_json)
from conftest import ALL_FAMILIES, draw_params


class TestFftInversion:
    def test_gaussian_pdf_at_nodes(self):
        m, s = 0.3, 1.7
        table = pdf_from_char_fn(lambda u: np.exp(1j * u * m - 0.5 * (s * u) ** 2),
                                 mean=m, sd=s)
        # compare at grid nodes: off-node linear interpolation adds ~1e-6
        sel = np.abs(table.x - m) < 4 * s
        expect = stats.norm.pdf(table.x[sel], m, s)
        assert np.max(np.abs(table.pdf[sel] - expect)) < 1e-8

    def test_gaussian_cdf(self):
        table = pdf_from_char_fn(lambda u: np.exp(-0.5 * u ** 2), mean=0, sd=1)
        sel = np.abs(table.x) < 4
        assert np.max(np.abs(table.cdf[sel] - stats.norm.cdf(table.x[sel]))) < 1e-6

    @pytest.mark.parametrize("family", ALL_FAMILIES)
    def test_integrates_to_one(self, family, rng):
        p = draw_params(family, 3, rng)
        for j in range(p.n):
            assert abs(marginal_density(p, j).integral - 1.0) < 1e-6

    def test_undecayed_char_fn_raises(self):
        # a point mass never decays; the doubling ladder must give up
        with pytest.raises(ValueError):
            pdf_from_char_fn(lambda u: np.ones_like(u, dtype=complex),
                             mean=0.0, sd=1.0)


class TestMixtureDensity:
    def test_gig_density_normalizes(self):
        from levymv.numerics import quadrature
        for eps, chi, psi in [(-0.5, 1.0, 2.0), (1.5, 0.0, 2.0), (-1.2, 2.0, 0.0)]:
            val = quadrature(lambda s: gig_density(s, eps, chi, psi), 0, np.inf)
            assert val == pytest.approx(1.0, abs=1e-8)

    def test_mgh_fft_matches_quadrature(self, rng):
        p = draw_params("MGH", 2, rng)
        table = marginal_density(p, 0)
        # marginal MGH is a univariate MGH with the margin's entries
        p1 = mdl.MghParams(p.epsilon, p.chi, p.psi, p.mu[:1], p.theta[:1],
                           p.Sigma[:1, :1])
        sel = np.linspace(0.1, 0.9, 10)
        idx = np.searchsorted(table.x, np.quantile(table.x[table.pdf > 1e-3 * table.pdf.max()], sel))
        for i in idx:
            assert table.pdf[i] == pytest.approx(
                nmv_mixture_pdf(table.x[i:i + 1], p1), rel=1e-6, abs=1e-8)

    def test_mnts_fft_matches_quadrature(self, rng):
        p = draw_params("MNTS", 2, rng)
        table = marginal_density(p, 1)
        p1 = mdl.MntsParams(p.a, p.lam, p.C, p.mu[1:], p.theta[1:],
                            p.Sigma[1:, 1:])
        live = table.x[table.pdf > 1e-3 * table.pdf.max()]
        idx = np.searchsorted(table.x, np.quantile(live, np.linspace(0.1, 0.9, 10)))
        for i in idx:
            assert table.pdf[i] == pytest.approx(
                nmv_mixture_pdf(table.x[i:i + 1], p1), rel=1e-6, abs=1e-8)

    def test_subordinator_density_mean(self):
        sub = mdl.CtsSubordinator(alpha=0.5, lam=2.0, C=1.0)
        table = cts_subordinator_density(sub)
        mean = np.trapezoid(table.x * table.pdf, table.x)
        assert mean == pytest.approx(sub.cumulants()[0], rel=1e-6)


class TestKs:
    def test_exact_fit_scale(self, rng):
        x = rng.normal(size=20_000)
        d = ks_distance(x, stats.norm.cdf)
        assert d < 1.63 / np.sqrt(len(x))  # 1% critical value

    def test_detects_misfit(self, rng):
        x = rng.standard_t(3, size=5_000)
        assert ks_distance(x, stats.norm.cdf) > 0.04

    def test_accepts_table(self, rng):
        table = pdf_from_char_fn(lambda u: np.exp(-0.5 * u ** 2), mean=0, sd=1)
        x = rng.normal(size=2_000)
        assert abs(ks_distance(x, table) - ks_distance(x, stats.norm.cdf)) < 1e-5


class TestReport:
    def test_schema_and_determinism(self, rng):
        p = draw_params("MNormal", 3, rng)
        Y = rng.multivariate_normal(p.mu, p.Sigma, size=2_000)
        r1 = build_report(Y, p, "mle", q=10, seed=1)
        r2 = build_report(Y, p, "mle", q=10, seed=1)
        csv1, csv2 = report_to_csv(r1), report_to_csv(r2)
        assert csv1 == csv2
        header = csv1.splitlines()[0].split(",")
        assert header == ["family", "estimator", "KS1", "KS2", "KS3",
                          "mean", "sd", "skewness", "ex.kurtosis", "rho",
                          "gmm_objective", "gbar_norm"]
        assert r1.ks.shape == (3,)
        js = report_to_json(r1)
        assert '"rho"' in js and '"gbar_norm"' in js

    def test_gbar_norm_small_on_truth(self, rng):
        p = draw_params("MNormal", 2, rng)
        Y = rng.multivariate_normal(p.mu, p.Sigma, size=50_000)
        grid = rng.normal(size=(10, 2)) / np.sqrt(np.diag(p.Sigma))
        assert charfn_distance(Y, p, grid) < 1e-3
