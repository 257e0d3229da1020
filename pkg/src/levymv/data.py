"""Price-file ingestion, log-return panels, and summary statistics."""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = ["ReturnPanel", "ingest_prices", "panel_from_returns",
           "summarize", "summary_to_csv"]


@dataclass(frozen=True)
class ReturnPanel:
    """T x n matrix of log-returns with margin labels and optional dates."""

    returns: np.ndarray
    labels: tuple
    dates: Optional[tuple] = field(default=None)

    def __post_init__(self):
        R = np.asarray(self.returns, dtype=float)
        if R.ndim != 2:
            raise ValueError("returns must be a T x n matrix")
        if R.shape[0] < 2:
            raise ValueError("need at least two return observations")
        if not np.all(np.isfinite(R)):
            raise ValueError("returns contain non-finite entries")
        labels = tuple(str(l) for l in self.labels)
        if len(labels) != R.shape[1]:
            raise ValueError("one label per margin required")
        if len(set(labels)) != len(labels):
            raise ValueError("labels must be unique")
        object.__setattr__(self, "returns", R)
        object.__setattr__(self, "labels", labels)
        if self.dates is not None:
            dates = tuple(str(d) for d in self.dates)
            if len(dates) != R.shape[0]:
                raise ValueError("one date per return row required")
            object.__setattr__(self, "dates", dates)

    @property
    def T(self) -> int:
        return self.returns.shape[0]

    @property
    def n(self) -> int:
        return self.returns.shape[1]


def panel_from_returns(returns, labels=None) -> ReturnPanel:
    R = np.asarray(returns, dtype=float)
    if labels is None:
        labels = [f"M{j + 1}" for j in range(R.shape[1])]
    return ReturnPanel(returns=R, labels=tuple(labels))


def _is_number(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def ingest_prices(path) -> ReturnPanel:
    """Read a price CSV (header row; optional leading date column) and
    build log-returns. Rows with any missing price are dropped with a
    warning; non-positive prices are an error."""
    if hasattr(path, "read"):
        text = path.read()
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if len(rows) < 4:  # header plus at least three price rows
        raise ValueError("price file needs a header and at least three rows")
    header = [c.strip() for c in rows[0]]
    body = rows[1:]
    has_dates = not _is_number(body[0][0].strip())
    first = 1 if has_dates else 0
    labels = header[first:]

    dates, prices, dropped = [], [], 0
    for r in body:
        cells = [c.strip() for c in r[first:]]
        if len(cells) != len(labels) or any(c == "" or c.lower() == "nan"
                                            for c in cells):
            dropped += 1
            continue
        vals = [float(c) for c in cells]
        if any(not np.isfinite(v) for v in vals):
            dropped += 1
            continue
        if any(v <= 0 for v in vals):
            raise ValueError("non-positive price encountered")
        prices.append(vals)
        if has_dates:
            dates.append(r[0].strip())
    if dropped:
        warnings.warn(f"dropped {dropped} rows with missing prices")
    if len(prices) < 3:
        raise ValueError("fewer than three usable price rows")
    P = np.asarray(prices, dtype=float)
    R = np.log(P[1:] / P[:-1])
    return ReturnPanel(returns=R, labels=tuple(labels),
                       dates=tuple(dates[1:]) if has_dates else None)


_SUMMARY_COLS = ("min", "max", "mean", "std", "skewness", "ex.kurtosis")


def summarize(panel) -> dict:
    """Per-margin summary in the fixed column order
    (min, max, mean, std, skewness, ex.kurtosis)."""
    R = panel.returns
    labels = panel.labels
    out = {}
    for j, lab in enumerate(labels):
        y = R[:, j]
        m = y.mean()
        s = y.std(ddof=1)
        d = y - m
        if s > 0:
            skew = float((d ** 3).mean() / s ** 3)
            kurt = float((d ** 4).mean() / s ** 4 - 3.0)
        else:
            skew = kurt = float("nan")
        out[lab] = {
            "min": float(y.min()), "max": float(y.max()),
            "mean": float(m), "std": float(s),
            "skewness": skew, "ex.kurtosis": kurt,
        }
    return out


def summary_to_csv(summary: dict) -> str:
    lines = ["label," + ",".join(_SUMMARY_COLS)]
    for lab, row in summary.items():
        lines.append(lab + "," + ",".join(f"{row[c]:.17g}"
                                          for c in _SUMMARY_COLS))
    return "\n".join(lines) + "\n"
