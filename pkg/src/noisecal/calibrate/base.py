import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..exceptions import FitError

MIN_SAMPLES = 10


@dataclass
class Dataset:
    """Predictor matrix (column 0 is the node level) and reference targets."""

    X: np.ndarray
    y: np.ndarray
    column_names: list = field(default_factory=lambda: ["node_dba"])

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X.reshape(-1, 1)
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        if self.X.shape[0] != self.y.size:
            raise ValueError(f"X has {self.X.shape[0]} rows but y has {self.y.size}")
        if self.X.shape[1] < 1:
            raise ValueError("dataset needs at least the node level column")
        if not (np.isfinite(self.X).all() and np.isfinite(self.y).all()):
            raise ValueError("dataset contains non-finite entries")
        if len(self.column_names) != self.X.shape[1]:
            self.column_names = list(self.column_names)[:self.X.shape[1]]
            self.column_names += [f"x{i}" for i in range(len(self.column_names), self.X.shape[1])]

    def __len__(self):
        return self.y.size

    @property
    def n_features(self):
        return self.X.shape[1]

    def subset(self, idx):
        return Dataset(self.X[idx], self.y[idx], list(self.column_names))

    def digest(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.X).tobytes())
        h.update(np.ascontiguousarray(self.y).tobytes())
        return h.hexdigest()


def to_dataset(series, features=()):
    """Build a Dataset from averaged windows; windows missing a feature are skipped."""
    rows, y = [], []
    for s in series:
        if any(f not in s.features for f in features) or math.isnan(s.ref_mean):
            continue
        rows.append([s.node_mean] + [s.features[f] for f in features])
        y.append(s.ref_mean)
    if not rows:
        raise ValueError("no windows carry the requested features")
    return Dataset(np.array(rows), np.array(y), ["node_dba", *features])


class CalibratorMixin(RegressorMixin):
    """Shared plumbing for the calibrators.

    Subclasses set ``family`` and implement ``_fit(X, y)`` and ``_predict(X)``;
    ``uses_all_columns`` is False for single-predictor families, which read only
    column 0 of whatever matrix they are given.
    """

    family = None
    uses_all_columns = True

    def _validate_fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        if X.shape[0] < MIN_SAMPLES:
            raise FitError(f"{self.family} needs at least {MIN_SAMPLES} samples, got {X.shape[0]}")
        self.n_features_in_ = X.shape[1]
        return X, y

    def fit(self, X, y):
        X, y = self._validate_fit(X, y)
        self._fit(X, y)
        self.residuals_ = y - self._predict(X)
        return self

    def predict(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"{self.family} was fitted on {self.n_features_in_} columns, got {X.shape[1]}")
        return self._predict(X)

    def get_learned(self):
        """JSON-ready dict of learned parameters."""
        raise NotImplementedError

    def set_learned(self, params):
        raise NotImplementedError


def predict(model, X):
    return model.predict(X)


__all__ = ["BaseEstimator", "CalibratorMixin", "Dataset", "MIN_SAMPLES", "predict", "to_dataset"]
