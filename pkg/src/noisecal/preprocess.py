"""Outlier removal, lag correction and fixed-window averaging of paired logs."""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._io import atomic_write
from .exceptions import AlignmentError

ALIGNED_HEADER = ("window_start", "node_mean", "ref_mean", "count", "velocity_mps", "lag_applied")


# --------------------------------------------------------------------------- #
# outliers

def tukey_hinges(values):
    """Lower and upper hinge: medians of the lower and upper halves of the sorted data.

    For an odd count the overall median belongs to neither half.
    """
    v = np.sort(np.asarray(values, dtype=float))
    n = v.size
    half = n // 2
    return float(np.median(v[:half])), float(np.median(v[n - half:]))


def iqr_fences(values, fence_factor=1.5):
    q1, q3 = tukey_hinges(values)
    iqr = q3 - q1
    return q1 - fence_factor * iqr, q3 + fence_factor * iqr


def iqr_outlier_mask(values, fence_factor=1.5):
    """Boolean mask of values outside ``[Q1 - k*IQR, Q3 + k*IQR]``. NaNs are never outliers."""
    values = np.asarray(values, dtype=float)
    finite = np.isfinite(values)
    if finite.sum() < 4:
        raise ValueError("IQR outlier removal needs at least 4 values")
    lo, hi = iqr_fences(values[finite], fence_factor)
    with np.errstate(invalid="ignore"):
        return finite & ((values < lo) | (values > hi))


def remove_outliers_iqr(values, fence_factor=1.5):
    """Split ``values`` into ``(kept, removed)``, both in input order."""
    values = np.asarray(values, dtype=float)
    mask = iqr_outlier_mask(values, fence_factor)
    return values[~mask], values[mask]


def clean_campaign(c, fence_factor=1.5):
    """Apply IQR removal independently to the node and reference columns.

    Node outliers drop the whole sample; reference outliers only blank the
    reference level, so the node sample survives unpaired.
    """
    node_out = np.zeros(len(c), dtype=bool)
    ref_out = np.zeros(len(c), dtype=bool)
    if np.isfinite(c.node_level).sum() >= 4:
        node_out = iqr_outlier_mask(c.node_level, fence_factor)
    if np.isfinite(c.ref_level).sum() >= 4:
        ref_out = iqr_outlier_mask(c.ref_level, fence_factor)
    ref_level = np.where(ref_out, np.nan, c.ref_level)
    stats = dict(c.stats, outliers_node=int(node_out.sum()), outliers_ref=int(ref_out.sum()))
    return c.replace(ref_level=ref_level, stats=stats).subset(~node_out)


# --------------------------------------------------------------------------- #
# lag

@dataclass(frozen=True)
class LagEstimate:
    """Best integer shift between node and reference.

    A positive ``lag`` means the node trails the reference: ``node[t]`` pairs with
    ``ref[t - lag]``.
    """

    lag: int
    peak_correlation: float
    mae_at_lag: float
    rmse_at_lag: float
    at_boundary: bool = False
    n_pairs: int = 0
    correlations: dict = field(default_factory=dict, repr=False, compare=False)


def to_grid(c, column):
    """Return ``(t0, values)`` of one level column on a dense 1 Hz grid (NaN at holes)."""
    t0 = int(c.timestamp[0])
    out = np.full(int(c.timestamp[-1]) - t0 + 1, np.nan)
    out[c.timestamp - t0] = getattr(c, column)
    return t0, out


def _pairs_at(node, ref, k):
    n = node.size
    if k >= 0:
        a, b = node[k:], ref[:n - k]
    else:
        a, b = node[:n + k], ref[-k:]
    m = np.isfinite(a) & np.isfinite(b)
    return a[m], b[m]


def _pearson(a, b):
    da = a - a.mean()
    db = b - b.mean()
    sa = math.sqrt(float(da @ da))
    sb = math.sqrt(float(db @ db))
    if sa == 0.0 or sb == 0.0:
        return math.nan
    return max(-1.0, min(1.0, float(da @ db) / (sa * sb)))


def estimate_lag(node, ref, max_lag=120, min_pairs=30):
    """Find the integer shift in ``[-max_lag, max_lag]`` maximizing Pearson r.

    ``node`` and ``ref`` are sampled on the same 1 Hz grid; NaN marks missing
    seconds. Ties go to the smallest ``|lag|``.
    """
    node = np.asarray(node, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if node.shape != ref.shape or node.ndim != 1:
        raise AlignmentError("node and reference must be 1-D series on the same grid")
    max_lag = int(max_lag)
    if max_lag < 0:
        raise ValueError("max_lag must be non-negative")
    overlap = int((np.isfinite(node) & np.isfinite(ref)).sum())
    if node.size < 2 * max_lag + min_pairs or overlap < min_pairs:
        raise AlignmentError(
            f"insufficient overlap: {node.size} seconds for a +/-{max_lag} s search")
    for name, s in (("node", node), ("reference", ref)):
        f = s[np.isfinite(s)]
        if f.size == 0 or np.ptp(f) == 0:
            raise AlignmentError(f"{name} series has zero variance; correlation undefined")

    corr = {}
    for k in range(-max_lag, max_lag + 1):
        a, b = _pairs_at(node, ref, k)
        corr[k] = _pearson(a, b) if a.size >= min_pairs else math.nan
    valid = {k: r for k, r in corr.items() if not math.isnan(r)}
    if not valid:
        raise AlignmentError("correlation undefined at every candidate lag")
    best_r = max(valid.values())
    tie = 1e-12 * max(1.0, abs(best_r))
    lag = min((k for k, r in valid.items() if r >= best_r - tie), key=lambda k: (abs(k), k))
    a, b = _pairs_at(node, ref, lag)
    resid = a - b
    return LagEstimate(
        lag=lag,
        peak_correlation=valid[lag],
        mae_at_lag=float(np.mean(np.abs(resid))),
        rmse_at_lag=float(np.sqrt(np.mean(resid ** 2))),
        at_boundary=abs(lag) == max_lag and max_lag > 0,
        n_pairs=int(a.size),
        correlations=corr,
    )


def estimate_campaign_lag(c, max_lag=120):
    _, node = to_grid(c, "node_level")
    _, ref = to_grid(c, "ref_level")
    return estimate_lag(node, ref, max_lag=max_lag)


def apply_lag(c, lag):
    """Re-pair each node sample at ``t`` with the reference reading at ``t - lag``.

    Samples left without a reference partner are dropped.
    """
    lag = int(lag)
    if len(c) == 0:
        raise AlignmentError("empty campaign")
    if abs(lag) > c.duration:
        raise AlignmentError(f"lag {lag} s exceeds campaign duration {c.duration} s")
    src = c.timestamp - lag
    pos = np.minimum(np.searchsorted(c.timestamp, src), len(c) - 1)
    hit = c.timestamp[pos] == src
    ref = np.where(hit, c.ref_level[pos], np.nan)
    keep = np.isfinite(ref) & np.isfinite(c.node_level)
    if not keep.any():
        raise AlignmentError(f"shifting by {lag} s leaves no paired samples")
    stats = dict(c.stats, lag_applied=lag)
    return c.replace(ref_level=ref, stats=stats).subset(keep)


# --------------------------------------------------------------------------- #
# averaging

@dataclass(frozen=True)
class AlignedSeries:
    """One averaging window of paired node/reference levels.

    ``latitude``/``longitude`` hold the mean position over the window so that
    windows can be mapped.
    """

    window_start: int
    node_mean: float
    ref_mean: float
    sample_count: int
    features: dict = field(default_factory=dict)
    lag_applied: int = 0
    window: int = 10
    latitude: float = math.nan
    longitude: float = math.nan

    def with_feature(self, name, value):
        return AlignedSeries(**{**self.__dict__, "features": {**self.features, name: value}})


def energetic_mean(levels):
    """Equivalent continuous level ``10*log10(mean(10**(L/10)))``."""
    levels = np.asarray(levels, dtype=float)
    top = levels.max()
    return float(top + 10.0 * np.log10(np.mean(10.0 ** ((levels - top) / 10.0))))


def time_average(c, window=10, min_count=5, mode="arithmetic", require_ref=True):
    """Average a lag-corrected campaign over windows aligned to epoch multiples of ``window``.

    Windows with fewer than ``min_count`` usable samples are dropped.
    """
    if window < 1:
        raise ValueError("window must be >= 1 second")
    if mode not in ("arithmetic", "energetic"):
        raise ValueError(f"unknown averaging mode {mode!r}")
    usable = c.paired if require_ref else np.isfinite(c.node_level)
    ts = c.timestamp[usable]
    if ts.size == 0:
        raise AlignmentError("no usable samples to average")
    node = c.node_level[usable]
    ref = c.ref_level[usable]
    lat = c.latitude[usable]
    lon = c.longitude[usable]
    wid = ts // window
    starts, first, counts = np.unique(wid, return_index=True, return_counts=True)
    lag = int(c.stats.get("lag_applied", 0))
    out = []
    for w, i, n in zip(starts, first, counts):
        if n < min_count:
            continue
        sl = slice(i, i + n)
        if mode == "arithmetic":
            nm = float(np.mean(node[sl]))
            rv = ref[sl]
            rm = float(np.mean(rv)) if np.isfinite(rv).all() else math.nan
        else:
            nm = energetic_mean(node[sl])
            rv = ref[sl]
            rm = energetic_mean(rv) if np.isfinite(rv).all() else math.nan
        out.append(AlignedSeries(
            window_start=int(w * window), node_mean=nm, ref_mean=rm, sample_count=int(n),
            lag_applied=lag, window=int(window),
            latitude=float(np.mean(lat[sl])), longitude=float(np.mean(lon[sl])),
        ))
    if not out:
        raise AlignmentError(f"no {window} s window reaches {min_count} samples")
    return out


def write_aligned_csv(series, path):
    with atomic_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ALIGNED_HEADER)
        for s in series:
            v = s.features.get("velocity_mps")
            w.writerow([s.window_start, repr(s.node_mean), repr(s.ref_mean), s.sample_count,
                        "" if v is None else repr(v), s.lag_applied])


def read_aligned_csv(path, window=10):
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        rows = csv.reader(fh)
        header = tuple(next(rows))
        if header != ALIGNED_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        for r in rows:
            feats = {"velocity_mps": float(r[4])} if r[4] else {}
            out.append(AlignedSeries(int(r[0]), float(r[1]), float(r[2]), int(r[3]),
                                     feats, int(r[5]), window))
    return out


# --------------------------------------------------------------------------- #

class CampaignPreprocessor(TransformerMixin, BaseEstimator):
    """Outlier removal, lag estimation/correction and window averaging as one transformer.

    ``fit`` estimates the node/reference lag on the cleaned campaign;
    ``transform`` cleans, applies the fitted lag and returns averaged windows.

    Parameters
    ----------
    fence_factor : float
        IQR fence multiplier.
    max_lag : int
        Half-width of the lag search window in seconds.
    window : int
        Averaging window in seconds.
    min_count : int
        Minimum samples for a window to be kept.
    mode : {"arithmetic", "energetic"}
    """

    def __init__(self, fence_factor=1.5, max_lag=120, window=10, min_count=5, mode="arithmetic"):
        self.fence_factor = fence_factor
        self.max_lag = max_lag
        self.window = window
        self.min_count = min_count
        self.mode = mode

    def fit(self, c, y=None):
        cleaned = clean_campaign(c, self.fence_factor)
        self.lag_ = estimate_campaign_lag(cleaned, self.max_lag)
        self.outliers_ = (cleaned.stats["outliers_node"], cleaned.stats["outliers_ref"])
        return self

    def align(self, c):
        """Cleaned and lag-corrected 1 Hz campaign."""
        check_is_fitted(self, "lag_")
        return apply_lag(clean_campaign(c, self.fence_factor), self.lag_.lag)

    def transform(self, c):
        return time_average(self.align(c), self.window, self.min_count, self.mode)
