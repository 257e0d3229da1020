"""Oracle tests for the shared numerical kernels."""
import numpy as np
import pytest

from levymv.numerics import (Grid1D, bessel_k, fft, gamma, ifft, log_gamma,
                             minimize_bounded, quadrature)


class TestBesselK:
    def test_half_order_closed_form(self):
        # K_{1/2}(x) = sqrt(pi/(2x)) e^{-x}
        for x in (0.3, 1.0, 4.2):
            expect = np.sqrt(np.pi / (2 * x)) * np.exp(-x)
            assert bessel_k(0.5, x) == pytest.approx(expect, rel=1e-12)

    def test_reference_value(self):
        # Abramowitz & Stegun: K_0(1) = 0.42102 44382...
        assert bessel_k(0.0, 1.0) == pytest.approx(0.4210244382407083, rel=1e-12)

    def test_recurrence(self):
        # K_{v+1}(x) = K_{v-1}(x) + (2v/x) K_v(x)
        for v, x in [(0.7, 2.0), (1.3, 0.8), (2.5, 5.0)]:
            lhs = bessel_k(v + 1, x)
            rhs = bessel_k(v - 1, x) + (2 * v / x) * bessel_k(v, x)
            assert lhs == pytest.approx(rhs, rel=1e-10)

    def test_symmetry_in_order(self):
        assert bessel_k(-1.4, 2.3) == pytest.approx(bessel_k(1.4, 2.3), rel=1e-14)


class TestGamma:
    def test_values(self):
        assert gamma(0.5) == pytest.approx(np.sqrt(np.pi), rel=1e-14)
        assert gamma(5.0) == pytest.approx(24.0, rel=1e-14)
        # reflection into the negative axis: Gamma(-1/2) = -2 sqrt(pi)
        assert gamma(-0.5) == pytest.approx(-2 * np.sqrt(np.pi), rel=1e-12)

    def test_log_gamma_sign(self):
        val, sign = log_gamma(-0.5)
        assert sign == -1
        assert np.exp(val) == pytest.approx(2 * np.sqrt(np.pi), rel=1e-12)


class TestFft:
    def test_round_trip(self, rng):
        x = rng.normal(size=256) + 1j * rng.normal(size=256)
        assert np.allclose(ifft(fft(x)), x, atol=1e-14)

    def test_power_of_two_required(self):
        with pytest.raises(ValueError):
            fft(np.zeros(100))

    def test_grid_shape(self):
        g = Grid1D(n_points=8, spacing=0.5, origin=-2.0)
        assert np.allclose(g.points, -2.0 + 0.5 * np.arange(8))
        with pytest.raises(ValueError):
            Grid1D(n_points=12, spacing=0.5, origin=0.0)


class TestMinimizeBounded:
    def test_quadratic(self):
        res = minimize_bounded(lambda x: float((x[0] - 0.3) ** 2 + (x[1] + 1) ** 2),
                               np.zeros(2), np.array([-2.0, -2.0]),
                               np.array([2.0, 2.0]))
        assert np.allclose(res.x, [0.3, -1.0], atol=1e-6)

    def test_respects_bounds(self):
        res = minimize_bounded(lambda x: float(x[0] ** 2), np.array([0.8]),
                               np.array([0.5]), np.array([1.0]))
        assert res.x[0] == pytest.approx(0.5, abs=1e-12)

    def test_never_worse_than_start(self):
        # pathological objective: optimizer may fail but must not regress
        def bumpy(x):
            return float(np.sin(50 * x[0]) + 1e6 * (x[0] < 0))
        res = minimize_bounded(bumpy, np.array([0.1]), np.array([-1.0]),
                               np.array([1.0]))
        assert res.value <= bumpy(np.array([0.1])) + 1e-15


class TestQuadrature:
    def test_gaussian_integral(self):
        val = quadrature(lambda s: np.exp(-s * s / 2), -np.inf, np.inf)
        assert val == pytest.approx(np.sqrt(2 * np.pi), rel=1e-10)

    def test_gig_normalization(self):
        # integral of s^{p-1} exp(-(chi/s + psi s)/2) = 2 K_p(sqrt(chi psi)) (chi/psi)^{p/2}
        p, chi, psi = 0.7, 1.3, 2.1
        val = quadrature(lambda s: s ** (p - 1) * np.exp(-(chi / s + psi * s) / 2),
                         0.0, np.inf)
        expect = 2 * bessel_k(p, np.sqrt(chi * psi)) * (chi / psi) ** (p / 2)
        assert val == pytest.approx(expect, rel=1e-10)

    def test_complex_integrand(self):
        val = quadrature(lambda s: np.exp(1j * s) * np.exp(-s), 0.0, np.inf)
        assert val == pytest.approx(1 / (1 - 1j), rel=1e-10)
