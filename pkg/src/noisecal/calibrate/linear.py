"""Least-squares calibrators: simple, multiple, polynomial and segmented regression."""

import numpy as np
from numpy.polynomial import Polynomial

from ..exceptions import FitError
from .base import BaseEstimator, CalibratorMixin


def _line(x, y):
    """Intercept and slope of the least-squares line; raises on constant ``x``."""
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    sxx = float(dx @ dx)
    if sxx <= 0.0:
        raise FitError("predictor has zero variance")
    b = float(dx @ (y - ym)) / sxx
    return float(ym - b * xm), b


class SimpleLinearRegression(CalibratorMixin, BaseEstimator):
    """Straight-line calibration ``ref = a + b * node`` on column 0."""

    family = "SLR"
    uses_all_columns = False

    def _fit(self, X, y):
        self.intercept_, self.slope_ = _line(X[:, 0], y)

    def _predict(self, X):
        return self.intercept_ + self.slope_ * X[:, 0]

    def get_learned(self):
        return {"intercept": self.intercept_, "slope": self.slope_}

    def set_learned(self, p):
        self.intercept_, self.slope_ = p["intercept"], p["slope"]


def _dependent_columns(X, tol=1e-10):
    """Indices of columns lying in the span of the intercept and the preceding columns."""
    n, p = X.shape
    basis = np.ones((n, 1))
    bad = []
    for j in range(p):
        col = X[:, j]
        coef, *_ = np.linalg.lstsq(basis, col, rcond=None)
        resid = col - basis @ coef
        if np.linalg.norm(resid) <= tol * max(1.0, np.linalg.norm(col)):
            bad.append((j, [k - 1 for k in np.flatnonzero(np.abs(coef[1:]) > tol) + 1]))
        else:
            basis = np.column_stack([basis, col])
    return bad


class MultipleLinearRegression(CalibratorMixin, BaseEstimator):
    """Linear calibration on every column, e.g. node level plus vehicle velocity.

    Solved through the normal equations of the standardized design with an
    LU (partial pivoting) solve.

    Parameters
    ----------
    column_names : list of str or None
        Names used in rank-deficiency errors.
    """

    family = "MLR"

    def __init__(self, column_names=None):
        self.column_names = column_names

    def _fit(self, X, y):
        if X.shape[1] < 2:
            raise FitError("MLR needs at least two predictor columns")
        bad = _dependent_columns(X)
        if bad:
            names = self.column_names or [f"x{i}" for i in range(X.shape[1])]
            desc = "; ".join(
                f"{names[j]} is collinear with "
                + (", ".join(names[k] for k in deps) if deps else "the intercept")
                for j, deps in bad)
            raise FitError(f"design matrix is rank deficient: {desc}")
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        Z = (X - mean) / scale
        ym = y.mean()
        beta = np.linalg.solve(Z.T @ Z, Z.T @ (y - ym))
        self.coef_ = beta / scale
        self.intercept_ = float(ym - self.coef_ @ mean)

    def _predict(self, X):
        return self.intercept_ + X @ self.coef_

    def get_learned(self):
        return {"intercept": self.intercept_, "coef": self.coef_.tolist()}

    def set_learned(self, p):
        self.intercept_ = p["intercept"]
        self.coef_ = np.asarray(p["coef"], dtype=float)


class PolynomialRegression(CalibratorMixin, BaseEstimator):
    """Polynomial calibration of the given degree on column 0.

    The fit and the predictions use the standardized predictor; ``coef_`` holds
    ``[a, b1, ..., bn]`` expressed in the original units.
    """

    family = "PR"
    uses_all_columns = False

    def __init__(self, degree=4):
        self.degree = degree

    def _fit(self, X, y):
        deg = int(self.degree)
        if not 1 <= deg <= 8:
            raise FitError(f"degree must lie in [1, 8], got {self.degree}")
        x = X[:, 0]
        if x.size <= deg + 1:
            raise FitError(f"degree {deg} needs more than {deg + 1} points")
        self.x_mean_ = float(x.mean())
        self.x_scale_ = float(x.std())
        if self.x_scale_ == 0.0:
            raise FitError("predictor has zero variance")
        z = (x - self.x_mean_) / self.x_scale_
        V = np.vander(z, deg + 1, increasing=True)
        self.z_coef_, _, rank, _ = np.linalg.lstsq(V, y, rcond=None)
        if rank < deg + 1:
            raise FitError(f"only {rank} distinct predictor values for degree {deg}")
        self.coef_ = self._original_coef()

    def _original_coef(self):
        sub = Polynomial([-self.x_mean_ / self.x_scale_, 1.0 / self.x_scale_])
        c = Polynomial(self.z_coef_)(sub).coef
        return np.pad(c, (0, int(self.degree) + 1 - c.size))

    def _predict(self, X):
        z = (X[:, 0] - self.x_mean_) / self.x_scale_
        return np.polynomial.polynomial.polyval(z, self.z_coef_)

    def get_learned(self):
        return {"coef": self.coef_.tolist(), "x_mean": self.x_mean_,
                "x_scale": self.x_scale_, "z_coef": self.z_coef_.tolist()}

    def set_learned(self, p):
        self.x_mean_, self.x_scale_ = p["x_mean"], p["x_scale"]
        self.z_coef_ = np.asarray(p["z_coef"], dtype=float)
        self.coef_ = np.asarray(p["coef"], dtype=float)


def _segment(x, y):
    """Line through one segment; a constant-predictor segment gets a flat line."""
    try:
        return _line(x, y)
    except FitError:
        return float(y.mean()), 0.0


def _sse(x, y):
    a, b = _segment(x, y)
    r = y - a - b * x
    return float(r @ r)


def breakpoint_candidates(x, grid="percentile"):
    """Candidate breakpoints: the 5th..95th percentiles, or every midpoint of distinct values."""
    if grid == "percentile":
        return np.unique(np.percentile(x, np.arange(5, 96)))
    if grid == "midpoints":
        u = np.unique(x)
        return (u[:-1] + u[1:]) / 2.0
    raise ValueError(f"unknown breakpoint grid {grid!r}")


def _segment_sse_curve(xs, ys, split):
    """SSE(left line) + SSE(right line) for sorted data split before each index in ``split``."""
    xs = xs - xs.mean()
    ys = ys - ys.mean()
    cs = [np.concatenate([[0.0], np.cumsum(v)]) for v in (np.ones_like(xs), xs, ys, xs * xs, xs * ys, ys * ys)]
    tot = [c[-1] for c in cs]

    def part(vals):
        n, sx, sy, sxx, sxy, syy = vals
        cxx = sxx - sx * sx / n
        cxy = sxy - sx * sy / n
        cyy = syy - sy * sy / n
        with np.errstate(divide="ignore", invalid="ignore"):
            fit = np.where(cxx > 1e-12 * np.maximum(sxx, 1.0), cxy * cxy / cxx, 0.0)
        return np.maximum(cyy - fit, 0.0)

    left = [c[split] for c in cs]
    right = [t - v for t, v in zip(tot, left)]
    return part(left) + part(right)


class SegmentedRegression(CalibratorMixin, BaseEstimator):
    """Two independent straight lines on column 0, split at breakpoint ``X_b``.

    Points with ``x < X_b`` use the first line, the rest the second. ``X_b`` is
    the candidate minimizing the summed squared error of both lines, each side
    keeping at least ``min_segment`` points.

    Parameters
    ----------
    grid : {"percentile", "midpoints"}
        Candidate set: percentiles 5..95 of the predictor, or all midpoints
        between distinct sorted values (exhaustive).
    min_segment : int
    """

    family = "SR"
    uses_all_columns = False

    def __init__(self, grid="percentile", min_segment=3):
        self.grid = grid
        self.min_segment = min_segment

    def _fit(self, X, y):
        x = X[:, 0]
        if x.size < 8:
            raise FitError("segmented regression needs at least 8 points")
        order = np.argsort(x, kind="stable")
        xs, ys = x[order], y[order]
        cand = breakpoint_candidates(xs, self.grid)
        split = np.searchsorted(xs, cand, side="left")
        ok = (split >= self.min_segment) & (xs.size - split >= self.min_segment)
        cand, split = cand[ok], split[ok]
        if cand.size == 0:
            raise FitError("no admissible breakpoint candidate")
        if cand.size <= 256:
            sse = np.array([_sse(xs[:k], ys[:k]) + _sse(xs[k:], ys[k:]) for k in split])
        else:
            approx = _segment_sse_curve(xs, ys, split)
            sse = np.full(cand.size, np.inf)
            for i in np.argsort(approx, kind="stable")[:8]:
                k = split[i]
                sse[i] = _sse(xs[:k], ys[:k]) + _sse(xs[k:], ys[k:])
        best = int(np.argmin(sse))
        k = split[best]
        self.breakpoint_ = float(cand[best])
        self.segments_ = (_segment(xs[:k], ys[:k]), _segment(xs[k:], ys[k:]))
        self.sse_ = float(sse[best])

    def _predict(self, X):
        x = X[:, 0]
        (a1, b1), (a2, b2) = self.segments_
        return np.where(x < self.breakpoint_, a1 + b1 * x, a2 + b2 * x)

    def get_learned(self):
        return {"breakpoint": self.breakpoint_, "segments": [list(s) for s in self.segments_],
                "sse": self.sse_}

    def set_learned(self, p):
        self.breakpoint_ = p["breakpoint"]
        self.segments_ = tuple(tuple(s) for s in p["segments"])
        self.sse_ = p["sse"]
