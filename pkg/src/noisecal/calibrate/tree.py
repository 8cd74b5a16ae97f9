"""Regression trees and bagged random forests."""

import math

import numpy as np
from joblib import Parallel, delayed

from ..exceptions import FitError
from .base import BaseEstimator, CalibratorMixin

_TIE = 1e-12


class Tree:
    """Flat array representation of a fitted binary regression tree.

    Samples with ``x[feature] <= threshold`` go to ``left``. Leaves have
    ``feature == -1``.
    """

    __slots__ = ("feature", "threshold", "left", "right", "value", "n_samples")

    def __init__(self, feature, threshold, left, right, value, n_samples):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)
        self.n_samples = np.asarray(n_samples, dtype=np.int64)

    @property
    def node_count(self):
        return self.feature.size

    @property
    def is_leaf(self):
        return self.feature < 0

    def depth(self):
        d = np.zeros(self.node_count, dtype=int)
        for i in range(self.node_count):
            if self.feature[i] >= 0:
                d[self.left[i]] = d[self.right[i]] = d[i] + 1
        return int(d.max())

    def apply(self, X):
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict(self, X):
        return self.value[self.apply(X)]

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in self.__slots__}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in cls.__slots__})


def best_split(X, y, features, min_leaf):
    """Exhaustive search for the split maximizing the squared-error reduction.

    Thresholds are midpoints between consecutive distinct sorted values. Ties
    go to the earlier feature in ``features`` and then to the lower threshold.

    Returns
    -------
    (feature, threshold, gain) or None when no admissible split reduces the error.
    """
    n = y.size
    yc = y - y.mean()
    total = float(yc.sum())
    base = total * total / n
    n_left = np.arange(1, n)
    pos_ok = (n_left >= min_leaf) & (n - n_left >= min_leaf)
    if not pos_ok.any():
        return None
    best = None
    for f in features:
        xv = X[:, f]
        order = np.argsort(xv, kind="stable")
        xs = xv[order]
        cs = np.cumsum(yc[order])[:-1]
        ok = pos_ok & (xs[1:] > xs[:-1])
        if not ok.any():
            continue
        gain = np.full(n - 1, -np.inf)
        nl = n_left[ok]
        sl = cs[ok]
        gain[ok] = sl * sl / nl + (total - sl) ** 2 / (n - nl) - base
        i = int(np.argmax(gain))
        g = float(gain[i])
        if best is None or g > best[2] + _TIE * max(1.0, abs(best[2])):
            thr = (xs[i] + xs[i + 1]) / 2.0
            if thr >= xs[i + 1]:
                thr = xs[i]
            best = (int(f), float(thr), g)
    if best is None or best[2] <= _TIE * max(1.0, float(yc @ yc)):
        return None
    return best


def grow_tree(X, y, max_depth=None, min_leaf=5, max_features=None, rng=None):
    """Grow a regression tree depth-first.

    ``max_features`` features are drawn without replacement at every split when
    it is smaller than the number of columns (requires ``rng``).
    """
    n, p = X.shape
    if n < 2 * min_leaf:
        raise FitError(f"need at least {2 * min_leaf} samples for min_leaf={min_leaf}, got {n}")
    k = p if max_features is None else int(max_features)
    all_features = np.arange(p)
    feature, threshold, left, right, value, count = [], [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(math.nan)
        left.append(-1)
        right.append(-1)
        value.append(float(y[idx].mean()))
        count.append(idx.size)
        return len(feature) - 1

    stack = [(np.arange(n), 0, new_node(np.arange(n)))]
    while stack:
        idx, depth, node = stack.pop()
        if (max_depth is not None and depth >= max_depth) or idx.size < 2 * min_leaf:
            continue
        feats = all_features if k >= p else np.sort(rng.choice(p, size=k, replace=False))
        split = best_split(X[idx], y[idx], feats, min_leaf)
        if split is None:
            continue
        f, thr, _ = split
        mask = X[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # right pushed first so the left subtree is numbered first
        stack.append((ri, depth + 1, right[node]))
        stack.append((li, depth + 1, left[node]))
    return Tree(feature, threshold, left, right, value, count)


class DecisionTreeRegression(CalibratorMixin, BaseEstimator):
    """Single regression tree; leaves predict the mean of their training targets.

    Parameters
    ----------
    max_depth : int or None
    min_leaf : int
        Minimum number of training samples in every leaf.
    """

    family = "DT"

    def __init__(self, max_depth=5, min_leaf=5):
        self.max_depth = max_depth
        self.min_leaf = min_leaf

    def _fit(self, X, y):
        if self.max_depth is not None and self.max_depth < 1:
            raise FitError("max_depth must be >= 1")
        if self.min_leaf < 1:
            raise FitError("min_leaf must be >= 1")
        self.tree_ = grow_tree(X, y, self.max_depth, self.min_leaf)
        self.y_range_ = (float(y.min()), float(y.max()))

    def _predict(self, X):
        return np.clip(self.tree_.predict(X), *self.y_range_)

    def get_learned(self):
        return {"tree": self.tree_.to_dict(), "y_range": list(self.y_range_)}

    def set_learned(self, p):
        self.tree_ = Tree.from_dict(p["tree"])
        self.y_range_ = tuple(p["y_range"])


def _fit_member(X, y, seed_seq, bootstrap, max_depth, min_leaf, max_features):
    rng = np.random.default_rng(seed_seq)
    if bootstrap:
        idx = rng.integers(0, y.size, size=y.size)
        X, y = X[idx], y[idx]
    return grow_tree(X, y, max_depth, min_leaf, max_features, rng)


class RandomForestRegression(CalibratorMixin, BaseEstimator):
    """Bagged ensemble of randomized regression trees; predicts the mean over trees.

    Each tree draws its own random stream from ``(seed, tree index)``, so results
    do not depend on ``n_jobs``.

    Parameters
    ----------
    n_trees : int
    max_depth : int or None
    min_leaf : int
    feature_subset : int or None
        Features tried per split. ``None`` means ``max(1, ceil(p / 3))``.
    bootstrap : bool
    seed : int
    n_jobs : int
        joblib workers used to grow trees.
    """

    family = "RFR"

    def __init__(self, n_trees=100, max_depth=None, min_leaf=5, feature_subset=None,
                 bootstrap=True, seed=0, n_jobs=1):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.feature_subset = feature_subset
        self.bootstrap = bootstrap
        self.seed = seed
        self.n_jobs = n_jobs

    def _fit(self, X, y):
        if self.n_trees < 1:
            raise FitError("n_trees must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise FitError("max_depth must be >= 1")
        if y.size < 2 * self.min_leaf:
            raise FitError(f"need at least {2 * self.min_leaf} samples")
        p = X.shape[1]
        k = self.feature_subset or max(1, math.ceil(p / 3))
        if not 1 <= k <= p:
            raise FitError(f"feature_subset must lie in [1, {p}]")
        self.max_features_ = k
        seeds = np.random.SeedSequence(self.seed).spawn(self.n_trees)
        self.trees_ = Parallel(n_jobs=self.n_jobs)(
            delayed(_fit_member)(X, y, s, self.bootstrap, self.max_depth, self.min_leaf, k)
            for s in seeds)
        self.y_range_ = (float(y.min()), float(y.max()))

    def _predict(self, X):
        out = np.zeros(X.shape[0])
        for t in self.trees_:
            out += t.predict(X)
        return np.clip(out / len(self.trees_), *self.y_range_)

    def get_learned(self):
        return {"max_features": self.max_features_, "y_range": list(self.y_range_),
                "trees": [t.to_dict() for t in self.trees_]}

    def set_learned(self, p):
        self.max_features_ = p["max_features"]
        self.y_range_ = tuple(p["y_range"])
        self.trees_ = [Tree.from_dict(t) for t in p["trees"]]
