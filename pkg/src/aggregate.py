"""
Ensemble statistics per level: moments, chi-square variance intervals,
Kolmogorov-Smirnov normality checks and log-log rates.
"""

import logging

import numpy as np
import pandas as pd
from scipy import stats
from sklearn.linear_model import LinearRegression

from src.config import KS_ALPHA, MIN_REPLICATIONS

logger = logging.getLogger(__name__)

CI_LEVEL = 0.95


class InsufficientReplications(ValueError):
    """Fewer replications than a summary needs."""


def variance_ci(var, count, level=CI_LEVEL):
    """Chi-square interval for a normal variance from the unbiased estimate."""
    dof = count - 1
    tail = (1.0 - level) / 2.0
    return (
        dof * var / stats.chi2.ppf(1.0 - tail, dof),
        dof * var / stats.chi2.ppf(tail, dof),
    )


def _ks_centered(values):
    scale = float(np.sqrt(np.mean(values ** 2)))
    if scale == 0.0:
        return np.nan, np.nan
    result = stats.kstest(values, "norm", args=(0.0, scale))
    return float(result.statistic), float(result.pvalue)


def summarize(values, ks=False, conditional_variance=None, min_replications=MIN_REPLICATIONS):
    """
    Summary of one column of replications.

    Args:
        values: 1-d array of replicated statistics
        ks: Run KS against a centered normal fitted to the values
        conditional_variance: Optional per-replication variances; when given,
            values / sqrt(variance) are KS-tested against N(0, 1)
        min_replications: Smallest acceptable sample

    Returns:
        dict with count, mean, var, var_ci_low, var_ci_high, degenerate,
        ks_stat, ks_p, ks_std_p
    """
    values = np.asarray(values, dtype=np.float64)
    count = len(values)
    if count < min_replications:
        raise InsufficientReplications(
            f"need at least {min_replications} replications, got {count}"
        )
    var = float(np.var(values, ddof=1))
    degenerate = var == 0.0
    low, high = (0.0, 0.0) if degenerate else variance_ci(var, count)
    row = {
        "count": count,
        "mean": float(np.mean(values)),
        "var": var,
        "var_ci_low": float(low),
        "var_ci_high": float(high),
        "degenerate": degenerate,
        "ks_stat": np.nan,
        "ks_p": np.nan,
        "ks_std_p": np.nan,
    }
    if ks and not degenerate:
        row["ks_stat"], row["ks_p"] = _ks_centered(values)
    if conditional_variance is not None and not degenerate:
        cv = np.asarray(conditional_variance, dtype=np.float64)
        ok = cv > 0
        if ok.sum() >= min_replications:
            row["ks_std_p"] = float(stats.kstest(values[ok] / np.sqrt(cv[ok]), "norm").pvalue)
    return row


def aggregate(frame, column="value", ks=False, conditional_column=None, min_replications=MIN_REPLICATIONS):
    """
    Per-level summary of a replication table.

    Args:
        frame: DataFrame with columns n, rep and the value column

    Returns:
        DataFrame indexed by position with one row per n
    """
    if frame.empty:
        raise InsufficientReplications("no replications to aggregate")
    rows = []
    for n, group in frame.groupby("n", sort=True):
        cond = group[conditional_column].to_numpy() if conditional_column else None
        row = summarize(group[column].to_numpy(), ks, cond, min_replications)
        row["n"] = int(n)
        rows.append(row)
    summary = pd.DataFrame(rows)
    return summary[["n"] + [c for c in summary.columns if c != "n"]]


def fit_rate(levels, values, base=2.0):
    """
    Slope of log_base(values) against levels by least squares.

    Returns:
        (slope, intercept)
    """
    levels = np.asarray(levels, dtype=np.float64).reshape(-1, 1)
    values = np.asarray(values, dtype=np.float64)
    if np.any(values <= 0):
        raise ValueError("rates need positive values")
    model = LinearRegression().fit(levels, np.log(values) / np.log(base))
    return float(model.coef_[0]), float(model.intercept_)


def trend_gap_ok(summary, column="gap", abs_tol=1e-12):
    """Non-convergence check: gap at the largest n must not exceed the gap at the smallest."""
    ordered = summary.sort_values("n")
    first, last = ordered[column].iloc[0], ordered[column].iloc[-1]
    # gaps at rounding level count as equal
    return bool(last <= first + abs_tol)


def flag_normality(summary, alpha=KS_ALPHA):
    """
    Add a ks_ok column: the standardized KS p-value, or the raw one when no
    standardization ran, is at least alpha. None where neither test ran.

    Informational only; pass rules never read it.
    """
    def judge(row):
        p = row["ks_std_p"] if not pd.isna(row["ks_std_p"]) else row["ks_p"]
        return None if pd.isna(p) else bool(p >= alpha)

    summary = summary.copy()
    summary["ks_ok"] = [judge(row) for _, row in summary.iterrows()]
    return summary
