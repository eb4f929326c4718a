"""Output-quality measurement: RMSE with invalid-value bookkeeping, AUC-ROC.

RMSE is taken over the pairs whose observed value is finite; counts of inf
and nan in the observed output drive a classification (numeric / inf / nan)
so that heavily corrupted runs are marked rather than averaged away. The
default invalid threshold is 2 ("more than one" invalid value); it is
configurable because the strict/loose reading differs by one.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, MetricError

NUMERIC = "numeric"
INVALID_INF = "inf"
INVALID_NAN = "nan"

DEFAULT_INVALID_THRESHOLD = 2
DISPLAY_ZERO_BELOW = 0.005  # report-time display rule; raw values keep precision


@dataclass(frozen=True)
class RmseReport:
    rmse: float
    n_inf: int
    n_nan: int
    classification: str
    n_finite: int
    n_total: int


@dataclass(frozen=True)
class RunAggregate:
    mean: float | None
    min: float | None
    max: float | None
    count: int
    nonfinite_count: int


def rmse_with_validity(
    golden, observed, invalid_threshold: int = DEFAULT_INVALID_THRESHOLD
) -> RmseReport:
    """RMSE over finite observed entries plus inf/nan classification.

    The golden reference must be finite. nan takes precedence over inf in
    the classification: it indicates deeper corruption.
    """
    g = np.asarray(getattr(golden, "array", golden), dtype=np.float64).reshape(-1)
    o = np.asarray(getattr(observed, "array", observed), dtype=np.float64).reshape(-1)
    if g.shape != o.shape:
        raise DimensionError(f"shape mismatch: {g.shape} vs {o.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError("golden output must be finite")
    n_nan = int(np.count_nonzero(np.isnan(o)))
    n_inf = int(np.count_nonzero(np.isinf(o)))
    finite = np.isfinite(o)
    n_finite = int(np.count_nonzero(finite))
    if n_finite:
        diff = g[finite] - o[finite]
        rmse = math.sqrt(float(np.mean(diff * diff)))
    else:
        rmse = math.nan
    if n_nan >= invalid_threshold:
        cls = INVALID_NAN
    elif n_inf >= invalid_threshold:
        cls = INVALID_INF
    else:
        cls = NUMERIC
    return RmseReport(rmse, n_inf, n_nan, cls, n_finite, o.size)


def sanitize_scores(scores) -> np.ndarray:
    """Map non-finite prediction scores onto the probability scale.

    nan -> 0.5 (no information), +inf -> 1.0, -inf -> 0.0. Finite values
    pass through unchanged.
    """
    out = np.asarray(scores, dtype=np.float64).copy()
    out[np.isnan(out)] = 0.5
    out[np.isposinf(out)] = 1.0
    out[np.isneginf(out)] = 0.0
    return out


def auc_roc(scores, labels) -> float:
    """Mann-Whitney AUC: P(score+ > score-) + 0.5 P(tie), exact via ranks."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.shape != y.shape:
        raise DimensionError("scores and labels differ in length")
    if np.any(np.isnan(s)):
        raise MetricError("scores contain NaN; sanitize_scores first")
    if not np.all((y == 0) | (y == 1)):
        raise MetricError("labels must be binary 0/1")
    n_pos = int(np.count_nonzero(y == 1))
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC undefined: both classes must be present")

    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(s.size, dtype=np.float64)
    sorted_s = s[order]
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        # average rank for ties; ranks are 1-based
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    pos_rank_sum = float(np.sum(ranks[y == 1]))
    u = pos_rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def aggregate_runs(values) -> RunAggregate:
    """Mean/min/max over the finite run values; non-finite counted separately."""
    vals = np.asarray(values, dtype=np.float64).reshape(-1)
    finite = vals[np.isfinite(vals)]
    nonfinite = int(vals.size - finite.size)
    if finite.size == 0:
        return RunAggregate(None, None, None, int(vals.size), nonfinite)
    lo, hi = float(np.min(finite)), float(np.max(finite))
    # summation rounding can land 1 ulp outside [lo, hi]; keep the invariant
    mean = min(max(float(np.mean(finite)), lo), hi)
    return RunAggregate(mean, lo, hi, int(vals.size), nonfinite)
