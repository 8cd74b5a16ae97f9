"""Descriptive analyses of calibrated noise levels.

Variances are population variances throughout.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .calibrate.metrics import correlation_p_value
from .geo import NoiseGrid
from .ingest import DEFAULT_UTC_OFFSET, parse_utc_offset
from .preprocess import energetic_mean

# day, night limits in dBA Leq
STANDARDS = {
    "industrial": (75.0, 70.0),
    "commercial": (65.0, 55.0),
    "residential": (55.0, 45.0),
    "silence": (50.0, 40.0),
}
DAY_START = 6 * 3600
NIGHT_START = 22 * 3600


def _moments(values):
    """Two-pass mean and population variance."""
    v = np.asarray(values, dtype=float)
    mean = math.fsum(v) / v.size
    var = math.fsum((v - mean) ** 2) / v.size
    return mean, var


def seconds_of_day(timestamps, utc_offset=DEFAULT_UTC_OFFSET):
    return (np.asarray(timestamps, dtype=np.int64) + parse_utc_offset(utc_offset)) % 86400


@dataclass(frozen=True)
class TemporalProfile:
    group: str
    bucket: int
    mean: float
    variance: float
    count: int


def _levels_of(c, calibrator, level):
    if calibrator is not None:
        X = c.node_level.reshape(-1, 1)
        return calibrator.predict(X)
    return getattr(c, level)


def temporal_profile(campaigns, bucket=3600, group_by=("day_class",), calibrator=None,
                     level="node_level", utc_offset=DEFAULT_UTC_OFFSET):
    """Mean and variance of levels per local time-of-day bucket and campaign group.

    Parameters
    ----------
    campaigns : list of Campaign
    bucket : int
        Bucket width in seconds (at most one day).
    group_by : tuple of str
        Metadata keys joined with ``-`` to label each campaign's group.
    calibrator : fitted estimator or None
        Applied to node levels when given; otherwise ``level`` is read as is.
    """
    if not 0 < bucket <= 86400:
        raise ValueError("bucket must lie in (0, 86400] seconds")
    if isinstance(group_by, str):
        group_by = (group_by,)
    acc = {}
    for c in campaigns:
        missing = [k for k in group_by if k not in c.metadata]
        if missing:
            raise ValueError(f"campaign {c.id} lacks metadata {missing}")
        label = "-".join(str(c.metadata[k]) for k in group_by)
        vals = np.asarray(_levels_of(c, calibrator, level), dtype=float)
        b = seconds_of_day(c.timestamp, utc_offset) // bucket * bucket
        ok = np.isfinite(vals)
        for key in np.unique(b[ok]):
            acc.setdefault((label, int(key)), []).append(vals[ok & (b == key)])
    if not acc:
        raise ValueError("no samples selected")
    out = []
    for (label, key) in sorted(acc):
        v = np.concatenate(acc[(label, key)])
        mean, var = _moments(v)
        out.append(TemporalProfile(label, key, mean, var, int(v.size)))
    return out


@dataclass(frozen=True)
class DistributionSummary:
    label: str
    mean: float
    variance: float
    min: float
    max: float
    count: int


def summarize(values, label=""):
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        raise ValueError(f"no values for {label or 'distribution'}")
    mean, var = _moments(v)
    return DistributionSummary(label, mean, var, float(v.min()), float(v.max()), int(v.size))


def compare_distributions(a, b, labels=("a", "b")):
    """Summaries of two samples plus ``mean_diff = mean(a) - mean(b)`` and ``var_ratio``."""
    sa, sb = summarize(a, labels[0]), summarize(b, labels[1])
    if sb.variance > 0:
        ratio = sa.variance / sb.variance
    elif sa.variance == 0:
        ratio = 1.0
    else:
        ratio = math.inf
    return sa, sb, {"mean_diff": sa.mean - sb.mean, "var_ratio": ratio}


def hotspots(g: NoiseGrid, threshold=90.0):
    """Cells whose mean level is at least ``threshold``, loudest first."""
    hits = [c for c in g.cells.values() if c.mean >= threshold]
    return sorted(hits, key=lambda c: (-c.mean, c.row, c.col))


@dataclass
class ExceedanceReport:
    zone: str
    period: str
    limit: float
    n: int
    n_exceed: int
    fraction: float
    leq: float
    leq_exceeds: bool
    exceedances: list = field(default_factory=list)


def period_mask(timestamps, period, utc_offset=DEFAULT_UTC_OFFSET,
                day_start=DAY_START, night_start=NIGHT_START):
    sod = seconds_of_day(timestamps, utc_offset)
    day = (sod >= day_start) & (sod < night_start)
    return day if period == "day" else ~day


def standards_check(levels, zone, period="day", timestamps=None, utc_offset=DEFAULT_UTC_OFFSET):
    """Compare levels against the ambient noise limit of a zone and period.

    ``levels`` may be a NoiseGrid (cell means are checked). When timestamps are
    given, only samples falling inside the period are checked. A sample exceeds
    the limit when strictly above it; ``leq`` is the energetic mean of all
    checked levels.
    """
    if zone not in STANDARDS:
        raise ValueError(f"unknown zone {zone!r}; choose from {sorted(STANDARDS)}")
    if period not in ("day", "night"):
        raise ValueError(f"unknown period {period!r}")
    limit = STANDARDS[zone][0 if period == "day" else 1]
    if isinstance(levels, NoiseGrid):
        levels = [c.mean for _, c in sorted(levels.cells.items())]
    v = np.asarray(levels, dtype=float)
    idx = np.arange(v.size)
    if timestamps is not None:
        m = period_mask(timestamps, period, utc_offset)
        v, idx = v[m], idx[m]
    if v.size == 0:
        raise ValueError("no levels in the selected period")
    exceed = v > limit
    leq = energetic_mean(v)
    return ExceedanceReport(zone, period, limit, int(v.size), int(exceed.sum()),
                            float(exceed.mean()), leq, leq > limit,
                            idx[exceed].tolist())


@dataclass
class VelocityTrend:
    bins: list
    slope: float
    intercept: float
    slope_stderr: float
    pearson_r: float
    p_value: float
    n: int


def velocity_noise_trend(series, bin_width=1.0, level="ref_mean", levels=None):
    """Per-velocity-bin mean levels and the least-squares slope of level on velocity.

    ``series`` are windows carrying the ``velocity_mps`` feature; ``levels``
    overrides the per-window level (e.g. calibrated node levels).

    Returns
    -------
    VelocityTrend
        ``bins`` holds ``(bin_start, mean_level, count)`` tuples.
    """
    rows = [s for s in series if "velocity_mps" in s.features]
    if levels is None:
        y = np.array([getattr(s, level) for s in rows], dtype=float)
        v = np.array([s.features["velocity_mps"] for s in rows], dtype=float)
    else:
        levels = np.asarray(levels, dtype=float)
        keep = ["velocity_mps" in s.features for s in series]
        y = levels[keep]
        v = np.array([s.features["velocity_mps"] for s in rows], dtype=float)
    ok = np.isfinite(y) & np.isfinite(v)
    y, v = y[ok], v[ok]
    if y.size < 10:
        raise ValueError(f"need at least 10 windows with velocity, got {y.size}")
    b = np.floor(v / bin_width).astype(np.int64)
    keys = np.unique(b)
    if keys.size < 2:
        raise ValueError("all velocities fall into a single bin")
    bins = [(float(k * bin_width), float(y[b == k].mean()), int((b == k).sum())) for k in keys]

    vm, ym = v.mean(), y.mean()
    dv, dy = v - vm, y - ym
    svv = float(dv @ dv)
    slope = float(dv @ dy) / svv
    intercept = float(ym - slope * vm)
    resid = dy - slope * dv
    n = y.size
    stderr = math.sqrt(float(resid @ resid) / (n - 2) / svv)
    syy = float(dy @ dy)
    if syy == 0.0:
        r, p = 0.0, 1.0
    else:
        r = max(-1.0, min(1.0, float(dv @ dy) / math.sqrt(svv * syy)))
        p = correlation_p_value(r, n)
    return VelocityTrend(bins, slope, intercept, stderr, r, p, n)
