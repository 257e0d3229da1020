"""End-to-end acceptance checks.

Each test covers one acceptance criterion and finishes by printing a
single PASS line (pytest -v adds the per-test PASSED/FAILED verdict).
The tests are ordered by criterion number and sized to finish well
inside their stated runtime budgets on a desktop machine.
"""
import io
import time

import numpy as np
import pytest
from scipy import stats
from scipy.optimize import linear_sum_assignment

from levymv import cli, data as dt, models as mdl, moments as mo
from levymv.density import (ks_distance, marginal_density, nmv_mixture_pdf,
                            pdf_from_char_fn)
from levymv.fit_em import fit_em
from levymv.fit_gmm import (asymptotic_covariance, build_grid, fit_gmm,
                            hac_weighting, moment_conditions)
from levymv.fit_linear import fastica, fit_linear_pca, standardize
from levymv.fit_moments import (corr_to_angles, fit_moments,
                                hypersphere_to_corr)
from levymv.sampling import sample_model
from conftest import ALL_FAMILIES, MIXTURE_FAMILIES, draw_params, rand_corr

BUNDLED = "src/levymv/datasets/synthetic_prices.csv"


def _bundled_path():
    from importlib import resources
    return str(resources.files("levymv") / "datasets" / "synthetic_prices.csv")


def _batch_se(stat, Y, n_batches=50):
    """Standard error of a full-sample statistic via batching."""
    T = Y.shape[0]
    size = T // n_batches
    vals = np.array([stat(Y[i * size:(i + 1) * size])
                     for i in range(n_batches)])
    return vals.std(axis=0, ddof=1) / np.sqrt(n_batches)


def test_criterion_01_parameter_counts():
    formulas = {
        "MNormal": lambda n: n + n * (n + 1) // 2,
        "MGH": lambda n: 3 + 2 * n + n * (n + 1) // 2,
        "MNTS": lambda n: 3 + 2 * n + n * (n + 1) // 2,
        "AlphaGH": lambda n: 2 + 5 * n,
        "RhoAlphaGH": lambda n: 2 + 5 * n + n * (n - 1) // 2,
        "MMixedTS": lambda n: 1 + 7 * n,
        "MGVG": lambda n: 2 + 6 * n + n * (n - 1) // 2,
        "ICA-MLCTS": lambda n: n * n + 5 * n,
        "ICA-MLG": lambda n: n * n + 5 * n,
        "PCA-MLCTS": lambda n: 5 + 6 * n,
    }
    for family, rule in formulas.items():
        for n in (2, 5, 10):
            assert mdl.param_count(family, n) == rule(n), (family, n)
    assert mdl.param_count("MGH", 5) == 28
    assert mdl.param_count("MMixedTS", 5) == 36
    assert mdl.param_count("PCA-MLCTS", 5) == 35
    print("PASS criterion 1: parameter counts match the closed-form rules "
          "for n in {2, 5, 10} across all ten families")


def test_criterion_02_char_fn_sanity(rng):
    t0 = time.time()
    for family in ALL_FAMILIES:
        for _ in range(200):
            p = draw_params(family, 3, rng)
            U = rng.uniform(-1, 1, size=(20, 3))
            U *= 50 / max(1.0, np.linalg.norm(U, axis=1).max())
            psi = p.char_fn(U)
            assert abs(p.char_fn(np.zeros(3)) - 1) <= 1e-12
            assert np.max(np.abs(np.conj(psi) - p.char_fn(-U))) <= 1e-12
            assert np.all(np.abs(psi) <= 1 + 1e-12)
            j = int(rng.integers(3))
            u = np.linspace(-30, 30, 11)
            Uj = np.zeros((11, 3))
            Uj[:, j] = u
            assert np.max(np.abs(p.marginal_char_fn(j, u)
                                 - p.char_fn(Uj))) <= 1e-14
    # stated reductions
    for _ in range(50):
        p = draw_params("RhoAlphaGH", 3, rng)
        p = mdl.RhoAlphaGhParams(p.epsilon, p.a, p.chi, p.psi, p.mu,
                                 p.theta, p.sigma, np.eye(3))
        red = mdl.reduce(p)
        assert red.tag == "AlphaGH"
        U = rng.normal(size=(10, 3)) * 10
        assert np.max(np.abs(p.char_fn(U) - red.params.char_fn(U))) <= 1e-10

        g = draw_params("MGH", 3, rng)
        assert mdl.reduce(mdl.MghParams(1.2, 0.0, g.psi, g.mu, g.theta,
                                        g.Sigma)).tag == "MVG"

        m = draw_params("MNTS", 2, rng)
        m = mdl.MntsParams(1.0, m.lam, m.C, m.mu, m.theta, m.Sigma)
        assert mdl.reduce(m).tag == "MNIG"
        V = rng.normal(size=(10, 2)) * 15
        phi = (1j * V @ m.theta
               - 0.5 * np.einsum("ij,jk,ik->i", V, m.Sigma, V))
        log_nig = (1j * V @ m.mu + 2 * m.C * np.sqrt(np.pi)
                   * (np.sqrt(m.lam) - np.sqrt(m.lam - phi)))
        assert np.max(np.abs(m.char_fn(V) - np.exp(log_nig))) <= 1e-10
    elapsed = time.time() - t0
    assert elapsed < 120
    print(f"PASS criterion 2: characteristic-function sanity suite "
          f"(200 draws/family) and reductions in {elapsed:.0f}s")


def test_criterion_03_moment_verification(rng):
    t0 = time.time()
    for family in ALL_FAMILIES:
        for _ in range(200):
            p = draw_params(family, 2, rng)
            ana = mo.analytic_margin_cumulants(p)
            for j in range(2):
                num = mo.numerical_cumulants(
                    lambda u: p.marginal_char_fn(j, u))
                err = np.abs(num - ana[j])
                rel = np.where(err <= 1e-8, 0.0,
                               err / np.maximum(np.abs(ana[j]), 1e-8))
                assert rel.max() < 1e-6, (family, j, ana[j], num)
            sd = np.sqrt(ana[:, 1])
            cov = mo.numerical_cross_cumulant(
                lambda a, b: p.char_fn(np.stack([a, b], axis=-1)),
                sd[0], sd[1])
            corr = cov / (sd[0] * sd[1])
            assert abs(corr - mo.analytic_correlation(p)[0, 1]) < 1e-6
    elapsed = time.time() - t0
    assert elapsed < 300
    print(f"PASS criterion 3: analytic moments agree with numerical "
          f"cumulants to 1e-6 relative (200 draws/family) in {elapsed:.0f}s")


def test_criterion_04_monte_carlo_oracle(rng):
    t0 = time.time()
    T = 1_000_000
    for family in MIXTURE_FAMILIES:
        p = draw_params(family, 3, rng)
        Y = sample_model(p, T, seed=101)
        ana = mo.analytic_moments(p)
        checks = {
            "mean": (lambda B: B.mean(axis=0), ana.mean),
            "sd": (lambda B: B.std(axis=0, ddof=1), ana.sd),
            "skewness": (lambda B: stats.skew(B, axis=0), ana.skewness),
            "ex.kurtosis": (lambda B: stats.kurtosis(B, axis=0),
                            ana.ex_kurtosis),
            "corr": (lambda B: np.corrcoef(B, rowvar=False)[
                np.triu_indices(3, 1)], ana.corr[np.triu_indices(3, 1)]),
        }
        for name, (stat, target) in checks.items():
            se = _batch_se(stat, Y)
            gap = np.abs(stat(Y) - target)
            assert np.all(gap <= 4 * se), (family, name, gap, se)
    elapsed = time.time() - t0
    assert elapsed < 600
    print(f"PASS criterion 4: Monte Carlo moments at T=1e6 within 4 s.e. "
          f"for the six mixture families in {elapsed:.0f}s")


def test_criterion_05_density_machinery(rng):
    t0 = time.time()
    # Gaussian inversion exact to 1e-8 at the grid nodes
    table = pdf_from_char_fn(lambda u: np.exp(1j * u * 0.2 - 0.5 * u ** 2),
                             mean=0.2, sd=1.0)
    sel = np.abs(table.x - 0.2) < 4
    assert np.max(np.abs(table.pdf[sel]
                         - stats.norm.pdf(table.x[sel], 0.2, 1.0))) < 1e-8
    # unit mass for every family
    for family in ALL_FAMILIES:
        p = draw_params(family, 3, rng)
        for j in range(3):
            assert abs(marginal_density(p, j).integral - 1.0) < 1e-6
    # FFT vs mixing-quadrature at 20 interior points
    for family in ("MGH", "MNTS"):
        p = draw_params(family, 2, rng)
        table = marginal_density(p, 0)
        if family == "MGH":
            p1 = mdl.MghParams(p.epsilon, p.chi, p.psi, p.mu[:1],
                               p.theta[:1], p.Sigma[:1, :1])
        else:
            p1 = mdl.MntsParams(p.a, p.lam, p.C, p.mu[:1], p.theta[:1],
                                p.Sigma[:1, :1])
        live = table.x[table.pdf > 1e-3 * table.pdf.max()]
        idx = np.searchsorted(table.x,
                              np.quantile(live, np.linspace(0.05, 0.95, 20)))
        for i in idx:
            direct = nmv_mixture_pdf(table.x[i:i + 1], p1)
            assert abs(table.pdf[i] - direct) <= 1e-6 * max(1.0, direct)
    elapsed = time.time() - t0
    assert elapsed < 120
    print(f"PASS criterion 5: FFT densities integrate to one and match "
          f"mixing quadrature at 20 points in {elapsed:.0f}s")


def test_criterion_06_em(rng):
    t0 = time.time()
    for family in ("MGH", "MNTS"):
        p = draw_params(family, 3, rng)
        Y = sample_model(p, 5_000, seed=42)
        fitted, trace = fit_em(Y, family, max_iter=60)
        assert np.all(np.diff(trace) >= -1e-8), family
        ks = [ks_distance(Y[:, j], marginal_density(fitted, j))
              for j in range(3)]
        assert max(ks) < 0.03, (family, ks)
        gap = np.linalg.norm(mo.analytic_moments(fitted).corr
                             - np.corrcoef(Y, rowvar=False), ord="fro")
        assert gap < 0.1, (family, gap)
    elapsed = time.time() - t0
    assert elapsed < 900
    print(f"PASS criterion 6: EM monotone, per-margin KS < 0.03 and "
          f"correlation gap < 0.1 for MGH and MNTS in {elapsed:.0f}s")


def test_criterion_07_gmm(rng):
    t0 = time.time()
    T, q = 100_000, 25
    for family in ("MMixedTS", "MNTS"):
        p = draw_params(family, 2, rng)
        Y = sample_model(p, T, seed=77)
        res = fit_gmm(Y, family, q=q, seed=0, with_covariance=False)
        # gbar_norm is the squared condition-mean norm
        assert res.gbar_norm <= 10 * q / T, (family, res.gbar_norm)
        # stage-2 point is at least as good as the stage-1 point under
        # the stage-2 weighting
        grid = build_grid(Y, q, seed=0)
        _, G1 = moment_conditions(res.stage1_params, Y, grid)
        F2, _ = hac_weighting(G1)
        g1, _ = moment_conditions(res.stage1_params, Y, grid)
        g2, _ = moment_conditions(res.params, Y, grid)
        assert g2 @ F2 @ g2 <= g1 @ F2 @ g1 + 1e-12
    # sandwich collapse under F = R^-1
    J = rng.normal(size=(12, 5))
    A = rng.normal(size=(12, 12))
    R = A @ A.T + np.eye(12)
    F = np.linalg.inv(R)
    V = asymptotic_covariance(J, F, R)
    direct = np.linalg.inv(J.T @ F @ J)
    assert np.max(np.abs(V - direct)) <= 1e-8 * np.max(np.abs(direct))
    elapsed = time.time() - t0
    assert elapsed < 900
    print(f"PASS criterion 7: GMM condition norms, two-stage ordering and "
          f"sandwich collapse at T=1e5 in {elapsed:.0f}s")


def test_criterion_08_moment_matching(rng):
    t0 = time.time()
    # hypersphere round trips
    for n in (2, 3, 5):
        for _ in range(10):
            C = rand_corr(n, rng)
            assert np.max(np.abs(hypersphere_to_corr(corr_to_angles(C), n)
                                 - C)) <= 1e-10
    p = draw_params("MNTS", 3, rng)
    Y = sample_model(p, 50_000, seed=55)
    out = fit_moments(Y, "MNTS", n_starts=100, seed=0)
    got = mo.analytic_moments(out.params)
    se_mean = _batch_se(lambda B: B.mean(axis=0), Y)
    se_sd = _batch_se(lambda B: B.std(axis=0, ddof=1), Y)
    se_corr = _batch_se(
        lambda B: np.corrcoef(B, rowvar=False)[np.triu_indices(3, 1)], Y)
    emp = mo.empirical_moments(Y)
    assert np.all(np.abs(got.mean - emp.mean) <= 3 * se_mean)
    assert np.all(np.abs(got.sd - emp.sd) <= 3 * se_sd)
    iu = np.triu_indices(3, 1)
    assert np.all(np.abs(got.corr[iu] - emp.corr[iu]) <= 3 * se_corr)
    elapsed = time.time() - t0
    assert elapsed < 600
    print(f"PASS criterion 8: 100-start moment matching within 3 Monte "
          f"Carlo s.e. and exact hypersphere round trips in {elapsed:.0f}s")


def test_criterion_09_linear_models(rng):
    t0 = time.time()
    # independent standardized gamma sources through a known mixing
    T = 50_000
    shapes = [1.5, 3.0, 6.0]
    S = np.column_stack([(rng.gamma(k, 1.0, T) - k) / np.sqrt(k)
                         for k in shapes])
    M = np.array([[1.0, 0.35, -0.25], [0.15, 1.0, 0.45], [-0.3, 0.25, 1.0]])
    Y = S @ M.T
    Z, _, _ = standardize(Y)
    dec = fastica(Z, seed=0)
    # reconstruction
    denom = np.linalg.norm(Z, ord="fro")
    assert np.linalg.norm(dec.X @ dec.A.T - Z, ord="fro") <= 1e-8 * denom
    # signed-permutation recovery of the mixing, column-normalized
    truth = (M / Z.std(axis=0, ddof=1)[:, None]) / np.linalg.norm(
        M / Z.std(axis=0, ddof=1)[:, None], axis=0)
    est = dec.A / np.linalg.norm(dec.A, axis=0)
    C = np.abs(truth.T @ est)
    rows, cols = linear_sum_assignment(-C)
    for r, c in zip(rows, cols):
        col = est[:, c] * np.sign(truth[:, r] @ est[:, c])
        assert np.max(np.abs(col - truth[:, r])) < 0.05, (r, c)
    # cumulant linearity, exact for gamma components
    import math
    comp = np.array([[k * (math.factorial(m - 1)) for m in range(1, 5)]
                     for k in shapes])
    A = rng.normal(size=(2, 3))
    got = mo.cumulants_of_linear_combination(A, comp)
    fact = np.array([1.0, 1.0, 2.0, 6.0])
    expect = np.stack([[fact[m - 1] * np.sum(A[i] ** m * np.asarray(shapes))
                        for m in range(1, 5)] for i in range(2)])
    assert np.max(np.abs(got - expect)) <= 1e-10
    # PCA pipeline correlation at T=50,000 on a factor-dominant panel
    f = np.array([0.6, -0.4, 0.8])
    common = mdl.CtsLaw(0.7, 40.0, 60.0, 2.0, 0.0)
    idio = [mdl.CtsLaw(0.9, 50.0, 50.0, 0.4, 0.0) for _ in range(3)]
    panel = sample_model(mdl.LinearPcaParams(f, common, idio), T, seed=9)
    fitted = fit_linear_pca(panel, "CTS")
    emp = np.corrcoef(panel, rowvar=False)
    got_corr = mo.analytic_moments(fitted).corr
    assert np.max(np.abs(got_corr - emp)) < 0.05
    elapsed = time.time() - t0
    assert elapsed < 600
    print(f"PASS criterion 9: ICA reconstruction/recovery, cumulant "
          f"linearity and PCA correlation fit in {elapsed:.0f}s")


def test_criterion_10_end_to_end(tmp_path):
    t0 = time.time()
    path = _bundled_path()
    pairs = [(est, fam) for est, fams in sorted(cli.COMPATIBILITY.items())
             for fam in sorted(fams)]
    header = ("family,estimator,KS1,KS2,KS3,KS4,KS5,mean,sd,skewness,"
              "ex.kurtosis,rho,gmm_objective,gbar_norm")
    repeat = {("moments", "MNTS"), ("mle", "MGH"), ("gmm", "MGVG"),
              ("two-step", "RhoAlphaGH"), ("linear", "PCA-MLCTS")}
    for est, fam in pairs:
        outs = []
        runs = 2 if (est, fam) in repeat else 1
        for run in range(runs):
            out = str(tmp_path / f"{est}_{fam}_{run}")
            # --starts 15 keeps the 29-job matrix inside the one-hour
            # budget; determinism and schema do not depend on the number
            # of random starts
            rc = cli.main(["fit", path, "--model", fam, "--estimator", est,
                           "--seed", "0", "--starts", "15", "--out", out])
            assert rc == 0, (est, fam)
            lines = open(out + ".report.csv").read().splitlines()
            assert lines[0] == header, (est, fam, lines[0])
            row = lines[1].split(",")
            assert row[0] == fam and row[1] == est
            assert all(np.isfinite(float(v)) for v in row[2:12])
            outs.append(out)
        if runs == 2:
            for suffix in (".params.json", ".report.csv", ".report.json"):
                assert (open(outs[0] + suffix, "rb").read()
                        == open(outs[1] + suffix, "rb").read()), (est, fam)
    elapsed = time.time() - t0
    assert elapsed < 3600
    print(f"PASS criterion 10: full estimator matrix on the bundled panel "
          f"({len(pairs)} pairs, byte-identical reruns) in {elapsed:.0f}s")
