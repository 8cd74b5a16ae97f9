import numpy as np
from sklearn.base import clone

from ..exceptions import FitError
from .metrics import evaluate


def fold_indices(n, folds=10, seed=0, mode="shuffle"):
    """Split ``range(n)`` into ``folds`` held-out index arrays whose sizes differ by at most 1.

    ``mode="shuffle"`` permutes with ``seed`` first; ``mode="block"`` keeps
    contiguous (temporal) blocks.
    """
    folds = int(folds)
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if n < folds:
        raise ValueError(f"cannot make {folds} folds from {n} samples")
    if mode == "shuffle":
        order = np.random.default_rng(seed).permutation(n)
    elif mode == "block":
        order = np.arange(n)
    else:
        raise ValueError(f"unknown fold mode {mode!r}")
    return np.array_split(order, folds)


def cross_val_predict(estimator, d, folds=10, seed=0, mode="shuffle"):
    """Held-out predictions for every sample plus the fold id of each sample."""
    pred = np.empty(len(d))
    fold_of = np.empty(len(d), dtype=int)
    for k, test in enumerate(fold_indices(len(d), folds, seed, mode)):
        train = np.setdiff1d(np.arange(len(d)), test, assume_unique=True)
        try:
            m = clone(estimator).fit(d.X[train], d.y[train])
            pred[test] = m.predict(d.X[test])
        except Exception as e:
            raise FitError(f"fold {k}: {e}") from e
        fold_of[test] = k
    return pred, fold_of


def cross_validate(estimator, d, folds=10, seed=0, mode="shuffle"):
    """k-fold cross-validation.

    Returns the pooled report over all held-out predictions; ``per_fold`` holds
    one report per fold.
    """
    pred, fold_of = cross_val_predict(estimator, d, folds, seed, mode)
    per_fold = [evaluate(pred[fold_of == k], d.y[fold_of == k]) for k in range(int(folds))]
    pooled = evaluate(pred, d.y)
    return type(pooled)(**{**pooled.__dict__, "per_fold": per_fold})


def transfer_evaluate(model, target):
    """Score a model fitted elsewhere on another dataset."""
    if len(target) == 0:
        raise ValueError("empty target dataset")
    return evaluate(model.predict(target.X), target.y)
