"""Regression calibrators mapping node readings (plus features) to reference levels."""

from .base import Dataset, predict, to_dataset
from .io import load_model, model_from_dict, model_to_dict, save_model
from .linear import (MultipleLinearRegression, PolynomialRegression, SegmentedRegression,
                     SimpleLinearRegression)
from .metrics import EvalReport, correlation_p_value, evaluate, pearson_r
from .model_selection import cross_val_predict, cross_validate, fold_indices, transfer_evaluate
from .svr import SupportVectorRegression
from .tree import DecisionTreeRegression, RandomForestRegression

FAMILIES = {
    cls.family: cls
    for cls in (SimpleLinearRegression, MultipleLinearRegression, PolynomialRegression,
                SegmentedRegression, SupportVectorRegression, DecisionTreeRegression,
                RandomForestRegression)
}


def make_calibrator(family, **hyperparams):
    try:
        cls = FAMILIES[family.upper()]
    except KeyError:
        raise ValueError(f"unknown model family {family!r}; choose from {sorted(FAMILIES)}") from None
    return cls(**hyperparams)


def fit_slr(d):
    return SimpleLinearRegression().fit(d.X, d.y)


def fit_mlr(d):
    return MultipleLinearRegression(column_names=list(d.column_names)).fit(d.X, d.y)


def fit_pr(d, degree=4):
    return PolynomialRegression(degree=degree).fit(d.X, d.y)


def fit_sr(d, grid="percentile"):
    return SegmentedRegression(grid=grid).fit(d.X, d.y)


def fit_svr(d, c=10.0, epsilon=0.5, gamma=None):
    return SupportVectorRegression(C=c, epsilon=epsilon, gamma=gamma).fit(d.X, d.y)


def fit_dt(d, max_depth=5, min_leaf=5):
    return DecisionTreeRegression(max_depth=max_depth, min_leaf=min_leaf).fit(d.X, d.y)


def fit_rfr(d, n_trees=100, max_depth=None, feature_subset=None, bootstrap=True, seed=0,
            min_leaf=5, n_jobs=1):
    return RandomForestRegression(n_trees=n_trees, max_depth=max_depth, min_leaf=min_leaf,
                                  feature_subset=feature_subset, bootstrap=bootstrap,
                                  seed=seed, n_jobs=n_jobs).fit(d.X, d.y)


__all__ = [
    "FAMILIES", "Dataset", "DecisionTreeRegression", "EvalReport", "MultipleLinearRegression",
    "PolynomialRegression", "RandomForestRegression", "SegmentedRegression",
    "SimpleLinearRegression", "SupportVectorRegression", "correlation_p_value",
    "cross_val_predict", "cross_validate", "evaluate", "fit_dt", "fit_mlr", "fit_pr", "fit_rfr",
    "fit_slr", "fit_sr", "fit_svr", "fold_indices", "load_model", "make_calibrator",
    "model_from_dict", "model_to_dict", "pearson_r", "predict", "save_model", "to_dataset",
    "transfer_evaluate",
]
