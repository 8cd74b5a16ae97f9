"""Goodness-of-fit statistics for calibrated predictions.

Metrics that are undefined for the given data (e.g. R^2 with constant targets)
are reported as ``None`` rather than as a number.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betainc

METRIC_FIELDS = ("n", "r2", "mae", "rmse", "pearson_r", "p_value")


@dataclass(frozen=True)
class EvalReport:
    n: int
    r2: float | None
    mae: float
    rmse: float
    pearson_r: float | None
    p_value: float | None
    per_fold: list = field(default_factory=list, compare=False)

    def as_row(self):
        return {k: getattr(self, k) for k in METRIC_FIELDS}


def t_two_sided_p(t, df):
    """Two-tailed p-value of Student's t with ``df`` degrees of freedom.

    Uses ``P(|T| > |t|) = I_{df/(df+t^2)}(df/2, 1/2)``.
    """
    if math.isinf(t):
        return 0.0
    x = df / (df + t * t)
    return float(min(1.0, max(0.0, betainc(df / 2.0, 0.5, x))))


def pearson_r(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    da = a - a.mean()
    db = b - b.mean()
    saa = float(da @ da)
    sbb = float(db @ db)
    if a.size < 2 or saa == 0.0 or sbb == 0.0:
        return None
    r = float(da @ db) / math.sqrt(saa * sbb)
    return max(-1.0, min(1.0, r))


def correlation_p_value(r, n):
    """p-value of the null hypothesis of zero correlation for ``n`` pairs."""
    if r is None or n < 3:
        return None
    if abs(r) >= 1.0:
        return 0.0
    t = r * math.sqrt(n - 2) / math.sqrt(1.0 - r * r)
    return t_two_sided_p(t, n - 2)


def evaluate(pred, actual):
    """Compare predictions with reference values.

    ``r2`` is undefined for constant ``actual``; ``pearson_r`` and ``p_value``
    are undefined when either input is constant or fewer than 3 pairs exist.
    """
    pred = np.asarray(pred, dtype=float).reshape(-1)
    actual = np.asarray(actual, dtype=float).reshape(-1)
    if pred.size != actual.size:
        raise ValueError(f"length mismatch: {pred.size} predictions, {actual.size} targets")
    n = actual.size
    if n == 0:
        raise ValueError("cannot evaluate an empty prediction set")
    resid = actual - pred
    ss_res = float(resid @ resid)
    dev = actual - actual.mean()
    ss_tot = float(dev @ dev)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else None
    mae = float(np.mean(np.abs(resid)))
    rmse = math.sqrt(ss_res / n)
    # rounding can leave rmse a hair below mae when all residuals are equal
    rmse = max(rmse, mae)
    r = pearson_r(actual, pred) if n >= 3 else None
    return EvalReport(n=n, r2=r2, mae=mae, rmse=rmse, pearson_r=r, p_value=correlation_p_value(r, n))
