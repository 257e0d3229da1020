"""FFT inversion of characteristic functions to densities/CDFs, the
mean-variance-mixture density, and the fitting-error diagnostics
(per-margin KS, moment gaps, characteristic-function distance).
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate

from . import models as mdl
from . import moments as mo
from .numerics import Grid1D, bessel_k, gamma, quadrature

__all__ = [
    "DensityTable", "FitReport", "pdf_from_char_fn", "marginal_density",
    "nmv_mixture_pdf", "gig_density", "cts_subordinator_density",
    "ks_distance", "charfn_distance", "gbar", "build_report",
    "report_to_csv", "report_to_json",
]


@dataclass(frozen=True)
class DensityTable:
    """Uniform grid of (x, pdf, cdf) from one marginal law."""

    x: np.ndarray
    pdf: np.ndarray
    cdf: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "pdf", np.asarray(self.pdf, dtype=float))
        object.__setattr__(self, "cdf", np.asarray(self.cdf, dtype=float))

    def pdf_at(self, x) -> np.ndarray:
        return np.interp(x, self.x, self.pdf)

    def cdf_at(self, x) -> np.ndarray:
        """Monotone piecewise-linear CDF evaluation, clamped to [0, 1]."""
        return np.clip(np.interp(x, self.x, self.cdf), 0.0, 1.0)

    @property
    def integral(self) -> float:
        return float(np.trapezoid(self.pdf, self.x))


def pdf_from_char_fn(char_fn_1d, grid: Grid1D | None = None, *,
                     mean: float | None = None, sd: float | None = None,
                     half_width_sds: float = 20.0) -> DensityTable:
    """Invert a marginal characteristic function to a density table by FFT.

    The support is centered at the law's mean with half-width 20 sd (both
    estimated from the characteristic function when not given); the
    frequency range doubles from 2^14 points until the characteristic
    function has decayed below 1e-12 at the edge.
    """
    if sd is None or mean is None:
        cums = mo.numerical_cumulants(char_fn_1d)
        mean = cums[0] if mean is None else mean
        sd = float(np.sqrt(cums[1])) if sd is None else sd
    if grid is not None:
        x0, dx, N = grid.origin, grid.spacing, grid.n_points
        table = _fft_invert(char_fn_1d, x0, dx, N)
        if table is None:
            raise ValueError("characteristic function has not decayed at the grid edge")
        return table

    width = 2 * half_width_sds * sd
    for log2n in (14, 15, 16, 17, 18):
        N = 2 ** log2n
        dx = width / N
        x0 = mean - half_width_sds * sd
        table = _fft_invert(char_fn_1d, x0, dx, N)
        if table is not None:
            return table
    raise ValueError("characteristic function has not decayed at the maximum grid size")


def _fft_invert(char_fn_1d, x0: float, dx: float, N: int) -> Optional[DensityTable]:
    du = 2 * np.pi / (N * dx)
    U = N * du / 2
    j = np.arange(N)
    u = -U + j * du
    psi = np.asarray(char_fn_1d(u), dtype=complex)
    edge = max(abs(psi[0]), abs(psi[-1]))
    if edge > 1e-12:
        return None  # caller widens the frequency range
    x = x0 + np.arange(N) * dx
    vals = np.fft.fft(psi * np.exp(-1j * j * du * x0))
    pdf = (du / (2 * np.pi)) * (np.exp(1j * U * x) * vals).real
    if pdf.min() < -1e-7:
        raise ValueError(f"FFT inversion produced pdf < 0 ({pdf.min():.2e})")
    pdf = np.clip(pdf, 0.0, None)
    cdf = np.concatenate([[0.0], integrate.cumulative_trapezoid(pdf, x)])
    return DensityTable(x=x, pdf=pdf, cdf=cdf)


def marginal_density(params, j: int, t: float = 1.0, **kw) -> DensityTable:
    """Density table of margin j built from its characteristic function."""
    cums = mo.analytic_margin_cumulants(params)[j]
    return pdf_from_char_fn(lambda u: params.marginal_char_fn(j, u, t),
                            mean=cums[0], sd=float(np.sqrt(cums[1])), **kw)


# ---------------------------------------------------------------------------
# mixture density for the subordinated-Brownian families
# ---------------------------------------------------------------------------

def gig_density(s, epsilon: float, chi: float, psi: float):
    """Generalized inverse Gaussian density at s > 0."""
    s = np.asarray(s, dtype=float)
    if chi == 0:
        rate = psi / 2
        from scipy.special import gammaln
        return np.where(s > 0, np.exp(epsilon * np.log(rate) - gammaln(epsilon)
                                      + (epsilon - 1) * np.log(np.maximum(s, 1e-300))
                                      - rate * s), 0.0)
    if psi == 0:
        from scipy.special import gammaln
        shape, scale = -epsilon, chi / 2
        return np.where(s > 0, np.exp(shape * np.log(scale) - gammaln(shape)
                                      - (shape + 1) * np.log(np.maximum(s, 1e-300))
                                      - scale / np.maximum(s, 1e-300)), 0.0)
    norm = (psi / chi) ** (epsilon / 2) / (2 * bessel_k(epsilon, np.sqrt(chi * psi)))
    out = np.where(s > 0,
                   norm * np.maximum(s, 1e-300) ** (epsilon - 1)
                   * np.exp(-0.5 * (chi / np.maximum(s, 1e-300) + psi * np.maximum(s, 1e-300))),
                   0.0)
    return out


def cts_subordinator_density(sub: mdl.CtsSubordinator, t: float = 1.0,
                             n_points: int = 2 ** 16):
    """Density of a tempered stable subordinator at time t via FFT inversion.

    Returns a DensityTable supported on the positive half-line.
    """
    cums = sub.cumulants() * t
    mean, sd = cums[0], np.sqrt(cums[1])
    width = mean + 40 * sd
    N = n_points
    dx = width / N
    du = 2 * np.pi / (N * dx)
    U = N * du / 2
    j = np.arange(N)
    u = -U + j * du
    psi = np.exp(t * sub.log_mgf(1j * u))
    x0 = 0.0
    vals = np.fft.fft(psi * np.exp(-1j * j * du * x0))
    x = x0 + np.arange(N) * dx
    pdf = np.clip((du / (2 * np.pi)) * (np.exp(1j * U * x) * vals).real, 0.0, None)
    cdf = np.concatenate([[0.0], integrate.cumulative_trapezoid(pdf, x)])
    return DensityTable(x=x, pdf=pdf, cdf=cdf)


def nmv_mixture_pdf(y, params, mixing_density=None) -> float:
    """Joint density of a subordinated-Brownian law by quadrature over the
    mixing variable: integral of N(y; mu + theta*s, s*Sigma) against h(s).
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    n = params.n
    if y.shape != (n,):
        raise ValueError("y must have one entry per margin")
    mu, theta, Sigma = params.mu, params.theta, params.Sigma
    chol = np.linalg.cholesky(Sigma)
    logdet = 2 * np.log(np.diag(chol)).sum()

    # an interpolated mixing table is piecewise linear and only ~1e-6
    # accurate; asking the quadrature for much more just triggers
    # roundoff failures, so relax the tolerance in that case
    quad_tol = 1e-12
    if mixing_density is None:
        if isinstance(params, mdl.MghParams):
            mixing_density = lambda s: gig_density(s, params.epsilon, params.chi, params.psi)
        elif isinstance(params, mdl.MntsParams):
            table = cts_subordinator_density(params.subordinator)
            mixing_density = table.pdf_at
            quad_tol = 1e-7
        else:
            raise TypeError("mixture density needs MGH or MNTS parameters")

    def integrand(s):
        z = np.linalg.solve(chol, y - mu - theta * s)
        quad_form = float(z @ z)
        log_norm = -0.5 * (n * np.log(2 * np.pi * s) + logdet + quad_form / s)
        return np.exp(log_norm) * mixing_density(s)

    val = quadrature(integrand, 0.0, np.inf, tol=quad_tol)
    return float(val)


# ---------------------------------------------------------------------------
# fitting-error measures
# ---------------------------------------------------------------------------

def ks_distance(sample, cdf) -> float:
    """Kolmogorov-Smirnov sup distance between a sample and a model CDF.

    cdf may be a callable or a DensityTable.
    """
    if isinstance(cdf, DensityTable):
        cdf = cdf.cdf_at
    xs = np.sort(np.asarray(sample, dtype=float))
    T = len(xs)
    F = np.asarray(cdf(xs), dtype=float)
    i = np.arange(1, T + 1)
    return float(max(np.max(np.abs(F - i / T)), np.max(np.abs(F - (i - 1) / T))))


def gbar(panel, params, grid_points: np.ndarray) -> np.ndarray:
    """Averaged characteristic-function moment conditions at the grid."""
    returns = np.asarray(getattr(panel, "returns", panel), dtype=float)
    U = np.atleast_2d(np.asarray(grid_points, dtype=float))
    emp = np.exp(1j * returns @ U.T).mean(axis=0)
    return emp - params.char_fn(U)


def charfn_distance(panel, params, grid_points: np.ndarray) -> float:
    """Squared Euclidean norm of the averaged moment conditions."""
    g = gbar(panel, params, grid_points)
    return float(np.sum(np.abs(g) ** 2))


@dataclass(frozen=True)
class FitReport:
    """One fitted-model diagnostic row: KS per margin plus moment gaps."""

    estimator: str
    family: str
    ks: np.ndarray
    err_mean: float
    err_sd: float
    err_skew: float
    err_kurt: float
    err_rho: float
    gbar_norm: float
    gmm_objective: Optional[float] = None
    wall_time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "ks", np.asarray(self.ks, dtype=float))


def build_report(panel, params, estimator: str, *, q: int = 50,
                 seed: int = 0, gmm_objective: float | None = None) -> FitReport:
    """Assemble the per-fit diagnostics table row."""
    from .fit_gmm import build_grid  # late import: fit_gmm depends on moments

    t_start = time.perf_counter()
    returns = np.asarray(getattr(panel, "returns", panel), dtype=float)
    emp = mo.empirical_moments(returns)
    ana = mo.analytic_moments(params)

    ks = np.empty(params.n)
    for j in range(params.n):
        table = marginal_density(params, j)
        ks[j] = ks_distance(returns[:, j], table)

    grid = build_grid(returns, q, seed)
    report = FitReport(
        estimator=estimator,
        family=mdl.family_tag(params),
        ks=ks,
        err_mean=float(np.linalg.norm(emp.mean - ana.mean)),
        err_sd=float(np.linalg.norm(emp.sd - ana.sd)),
        err_skew=float(np.linalg.norm(emp.skewness - ana.skewness)),
        err_kurt=float(np.linalg.norm(emp.ex_kurtosis - ana.ex_kurtosis)),
        err_rho=float(np.linalg.norm(emp.corr - ana.corr, ord="fro")),
        gbar_norm=charfn_distance(returns, params, grid.points),
        gmm_objective=gmm_objective,
        wall_time=time.perf_counter() - t_start,
    )
    return report


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def report_to_csv(report: FitReport) -> str:
    """Serialize in the diagnostics-table column order."""
    ks_cols = [f"KS{j + 1}" for j in range(len(report.ks))]
    header = (["family", "estimator"] + ks_cols
              + ["mean", "sd", "skewness", "ex.kurtosis", "rho",
                 "gmm_objective", "gbar_norm"])
    row = ([report.family, report.estimator]
           + [_fmt(k) for k in report.ks]
           + [_fmt(report.err_mean), _fmt(report.err_sd), _fmt(report.err_skew),
              _fmt(report.err_kurt), _fmt(report.err_rho),
              "" if report.gmm_objective is None else _fmt(report.gmm_objective),
              _fmt(report.gbar_norm)])
    return ",".join(header) + "\n" + ",".join(row) + "\n"


def report_to_json(report: FitReport) -> str:
    out = {
        "family": report.family,
        "estimator": report.estimator,
        "ks": [float(_fmt(k)) for k in report.ks],
        "mean": float(_fmt(report.err_mean)),
        "sd": float(_fmt(report.err_sd)),
        "skewness": float(_fmt(report.err_skew)),
        "ex.kurtosis": float(_fmt(report.err_kurt)),
        "rho": float(_fmt(report.err_rho)),
        "gmm_objective": (None if report.gmm_objective is None
                          else float(_fmt(report.gmm_objective))),
        "gbar_norm": float(_fmt(report.gbar_norm)),
    }
    return json.dumps(out, indent=2)
