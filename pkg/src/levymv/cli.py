"""Command-line surface: summarize, fit, simulate, report.

Exit codes: 0 success, 2 usage error (bad arguments, unsupported
family/estimator pair, unreadable input), 3 numerical failure.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from datetime import date, timedelta

import numpy as np

from . import data as dt
from . import models as mdl
from .density import build_report, report_to_csv, report_to_json

__all__ = ["JobConfig", "run_job", "main", "COMPATIBILITY"]

_ALL = ("MNormal", "MGH", "MNTS", "AlphaGH", "RhoAlphaGH", "MMixedTS",
        "MGVG", "ICA-MLCTS", "ICA-MLG", "PCA-MLCTS")

COMPATIBILITY = {
    "moments": frozenset(_ALL),
    "mle": frozenset({"MNormal", "MGH", "MNTS"}),
    "gmm": frozenset(_ALL),
    "two-step": frozenset({"AlphaGH", "RhoAlphaGH", "MGVG"}),
    "linear": frozenset({"ICA-MLCTS", "ICA-MLG", "PCA-MLCTS"}),
}


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class JobConfig:
    family: str
    estimator: str
    input_path: str
    output_path: str | None = None
    q: int = 25
    seed: int = 0
    n_starts: int = 100
    options: dict = field(default_factory=dict)

    def validate(self):
        if self.estimator not in COMPATIBILITY:
            raise UsageError(f"unknown estimator {self.estimator!r}")
        if self.family not in _ALL:
            raise UsageError(f"unknown family {self.family!r}")
        if self.family not in COMPATIBILITY[self.estimator]:
            raise UsageError(f"estimator {self.estimator!r} does not "
                             f"support family {self.family!r}")
        if self.q < 2 or self.seed < 0 or self.n_starts < 1:
            raise UsageError("q must be >= 2, seed >= 0, starts >= 1")


def _fit(config: JobConfig, panel: dt.ReturnPanel):
    """Dispatch a fit; returns (params, gmm_objective or None)."""
    fam, est = config.family, config.estimator
    Y = panel.returns
    if est == "moments":
        from .fit_moments import fit_moments
        return fit_moments(Y, fam, n_starts=config.n_starts,
                           seed=config.seed).params, None
    if est == "mle":
        if fam == "MNormal":
            return mdl.MNormalParams(mu=Y.mean(axis=0),
                                     Sigma=np.cov(Y, rowvar=False)), None
        from .fit_em import fit_em
        return fit_em(Y, fam)[0], None
    if est == "gmm":
        from .fit_gmm import fit_gmm
        res = fit_gmm(Y, fam, q=config.q, seed=config.seed,
                      with_covariance=False, n_starts=config.n_starts)
        return res.params, res.objective
    if est == "two-step":
        from .fit_linear import fit_two_step
        return fit_two_step(Y, fam), None
    if est == "linear":
        from .fit_linear import fit_linear_ica, fit_linear_pca
        if fam == "PCA-MLCTS":
            return fit_linear_pca(Y, "CTS"), None
        return fit_linear_ica(Y, "CTS" if fam == "ICA-MLCTS" else "LG",
                              seed=config.seed), None
    raise UsageError(f"unknown estimator {est!r}")


def run_job(config: JobConfig):
    """Run one fit job; returns (params, report) and writes the artifacts
    (params JSON, report CSV + JSON) when an output prefix is given."""
    config.validate()
    panel = dt.ingest_prices(config.input_path)
    params, gmm_objective = _fit(config, panel)
    report = build_report(panel, params, config.estimator, q=config.q,
                          seed=config.seed, gmm_objective=gmm_objective)
    if config.output_path:
        prefix = config.output_path
        with open(prefix + ".params.json", "w", encoding="utf-8") as fh:
            fh.write(mdl.params_to_json(params) + "\n")
        with open(prefix + ".report.csv", "w", encoding="utf-8") as fh:
            fh.write(report_to_csv(report))
        with open(prefix + ".report.json", "w", encoding="utf-8") as fh:
            fh.write(report_to_json(report) + "\n")
    return params, report


def _business_dates(count: int, start=date(2010, 1, 4)):
    out, d = [], start
    while len(out) < count:
        if d.weekday() < 5:
            out.append(d.isoformat())
        d += timedelta(days=1)
    return out


def _simulate(params, T: int, seed: int) -> str:
    """Price CSV text: 100 * exp(cumulated returns), business-day stamps."""
    from .sampling import sample_model

    R = sample_model(params, T, seed=seed)
    P = 100.0 * np.exp(np.concatenate([np.zeros((1, R.shape[1])),
                                       np.cumsum(R, axis=0)]))
    labels = [f"A{j + 1}" for j in range(R.shape[1])]
    lines = ["date," + ",".join(labels)]
    for d, row in zip(_business_dates(T + 1), P):
        lines.append(d + "," + ",".join(f"{p:.17g}" for p in row))
    return "\n".join(lines) + "\n"


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="levymv")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("summarize", help="per-margin return statistics")
    s.add_argument("csv")

    f = sub.add_parser("fit", help="fit a model to a price panel")
    f.add_argument("csv")
    f.add_argument("--model", required=True)
    f.add_argument("--estimator", required=True,
                   choices=sorted(COMPATIBILITY))
    f.add_argument("--q", type=int, default=25)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--starts", type=int, default=100)
    f.add_argument("--out", default=None)

    m = sub.add_parser("simulate", help="simulate a price panel")
    m.add_argument("--params", required=True)
    m.add_argument("--T", type=int, required=True)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--out", default=None)

    r = sub.add_parser("report", help="diagnostics of given parameters")
    r.add_argument("--params", required=True)
    r.add_argument("--data", required=True)
    r.add_argument("--out", default=None)
    r.add_argument("--q", type=int, default=25)
    r.add_argument("--seed", type=int, default=0)
    return ap


def _dispatch(args) -> int:
    if args.command == "summarize":
        panel = dt.ingest_prices(args.csv)
        sys.stdout.write(dt.summary_to_csv(dt.summarize(panel)))
        return 0

    if args.command == "fit":
        config = JobConfig(family=args.model, estimator=args.estimator,
                           input_path=args.csv, output_path=args.out,
                           q=args.q, seed=args.seed, n_starts=args.starts)
        params, report = run_job(config)
        if not args.out:
            sys.stdout.write(report_to_csv(report))
            sys.stdout.write(mdl.params_to_json(params) + "\n")
        return 0

    if args.command == "simulate":
        with open(args.params, "r", encoding="utf-8") as fh:
            params = mdl.params_from_json(fh.read())
        if args.T < 1:
            raise UsageError("T must be positive")
        text = _simulate(params, args.T, args.seed)
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return 0

    if args.command == "report":
        with open(args.params, "r", encoding="utf-8") as fh:
            params = mdl.params_from_json(fh.read())
        panel = dt.ingest_prices(args.data)
        report = build_report(panel, params, "given-params", q=args.q,
                              seed=args.seed)
        text = report_to_json(report) + "\n" \
            if args.out and args.out.endswith(".json") else report_to_csv(report)
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return 0

    raise UsageError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return _dispatch(args)
    except (UsageError, FileNotFoundError, KeyError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OverflowError, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
