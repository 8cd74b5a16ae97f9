import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from noisecal.calibrate import (FAMILIES, Dataset, SimpleLinearRegression, correlation_p_value,
                                cross_validate, evaluate, fold_indices, load_model,
                                make_calibrator, pearson_r, save_model, transfer_evaluate)
from noisecal.calibrate.io import model_from_dict, model_to_dict, write_report_rows
from noisecal.calibrate.metrics import t_two_sided_p
from noisecal.exceptions import FitError


def test_perfect_predictions():
    y = np.array([60.0, 65.0, 71.0, 80.0])
    rep = evaluate(y, y)
    assert (rep.r2, rep.mae, rep.rmse, rep.pearson_r, rep.p_value) == (1.0, 0.0, 0.0, 1.0, 0.0)


def test_hand_fixture():
    rep = evaluate([2, 2, 2], [1, 2, 3])
    assert rep.mae == pytest.approx(2 / 3)
    assert rep.rmse == pytest.approx(math.sqrt(2 / 3))
    assert rep.rmse == pytest.approx(0.8165, abs=5e-5)
    assert rep.r2 == 0.0
    assert rep.pearson_r is None and rep.p_value is None


def test_constant_actual_leaves_r2_undefined():
    rep = evaluate([1.0, 2.0, 3.0], [5.0, 5.0, 5.0])
    assert rep.r2 is None and rep.pearson_r is None
    with pytest.raises(ValueError):
        evaluate([1.0], [1.0, 2.0])


def test_p_value_at_zero_correlation():
    assert correlation_p_value(0.0, 10) == 1.0


@pytest.mark.parametrize("t, df", [(0.5, 3), (2.0, 8), (-3.3, 20), (1.96, 1000), (10.0, 5)])
def test_t_tail_matches_numerical_integral(t, df):
    assert t_two_sided_p(t, df) == pytest.approx(oracles.t_two_sided_p(t, df), rel=1e-9, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 60))
def test_rmse_at_least_mae(seed, n):
    rng = np.random.default_rng(seed)
    rep = evaluate(rng.normal(size=n), rng.normal(size=n))
    assert rep.rmse >= rep.mae


def test_rmse_equals_mae_when_residuals_match():
    actual = np.arange(10.0)
    rep = evaluate(actual + np.where(np.arange(10) % 2, 1.5, -1.5), actual)
    assert rep.rmse == rep.mae == 1.5


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10), st.floats(-50, 50))
def test_pearson_affine_invariance(seed, scale, shift):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=30), rng.normal(size=30)
    r = pearson_r(a, b)
    assert pearson_r(a * scale + shift, b) == pytest.approx(r, abs=1e-9)
    assert pearson_r(a, -b) == pytest.approx(-r, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 0.98), st.floats(0.001, 0.01), st.integers(3, 500))
def test_p_value_monotone(r, dr, n):
    assert correlation_p_value(r + dr, n) < correlation_p_value(r, n)
    if correlation_p_value(r, n + 1) > 1e-300:
        assert correlation_p_value(r, n + 1) < correlation_p_value(r, n)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_slr_r2_is_squared_correlation(seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(40, 110, 50)
    y = rng.normal(0.8, 0.2) * x + rng.normal(0, 5, 50)
    m = SimpleLinearRegression().fit(x[:, None], y)
    rep = evaluate(m.predict(x[:, None]), y)
    assert rep.r2 == pytest.approx(rep.pearson_r ** 2, abs=1e-9)


def test_fold_sizes():
    for n, k in [(100, 10), (103, 10), (12, 12), (25, 7)]:
        for mode in ("shuffle", "block"):
            folds = fold_indices(n, k, seed=3, mode=mode)
            sizes = [f.size for f in folds]
            assert max(sizes) - min(sizes) <= 1
            assert sorted(np.concatenate(folds)) == list(range(n))
    assert np.array_equal(np.concatenate(fold_indices(20, 4, mode="block")), np.arange(20))
    with pytest.raises(ValueError):
        fold_indices(5, 6)
    with pytest.raises(ValueError):
        fold_indices(5, 1)


def test_cv_on_noiseless_line():
    x = np.linspace(50, 100, 60)
    rep = cross_validate(SimpleLinearRegression(), Dataset(x[:, None], 0.9 * x + 4))
    assert rep.r2 == pytest.approx(1.0, abs=1e-12)
    assert rep.rmse == pytest.approx(0.0, abs=1e-9)
    assert len(rep.per_fold) == 10


def test_leave_one_out_by_hand():
    rng = np.random.default_rng(1)
    x = rng.uniform(50, 100, 12)
    y = 0.7 * x + rng.normal(0, 2, 12)
    rep = cross_validate(SimpleLinearRegression(), Dataset(x[:, None], y), folds=12)
    assert len(rep.per_fold) == 12 and all(f.n == 1 for f in rep.per_fold)
    resid = []
    for i in range(12):
        keep = np.arange(12) != i
        b, a = np.polyfit(x[keep], y[keep], 1)
        resid.append(abs(y[i] - a - b * x[i]))
    assert rep.mae == pytest.approx(np.mean(resid), abs=1e-10)


def test_cv_errors_name_the_fold():
    d = Dataset(np.arange(15.0)[:, None], np.arange(15.0))
    with pytest.raises(FitError, match="fold 0"):
        cross_validate(SimpleLinearRegression(), d, folds=2)
    with pytest.raises(ValueError):
        cross_validate(SimpleLinearRegression(), d, folds=16)


def test_transfer_on_training_set_is_plain_evaluate():
    rng = np.random.default_rng(2)
    d = Dataset(rng.uniform(50, 100, (40, 1)), rng.uniform(50, 100, 40))
    m = SimpleLinearRegression().fit(d.X, d.y)
    assert transfer_evaluate(m, d) == evaluate(m.predict(d.X), d.y)
    with pytest.raises(ValueError):
        transfer_evaluate(m, Dataset(np.empty((0, 1)), np.empty(0)))


@pytest.mark.parametrize("family", sorted(FAMILIES))
def test_model_round_trip(tmp_path, family):
    rng = np.random.default_rng(3)
    X = np.column_stack([rng.uniform(50, 100, 60), rng.uniform(0, 15, 60)])
    y = 0.6 * X[:, 0] + 30 - 0.3 * X[:, 1] + rng.normal(0, 1, 60)
    extra = {"RFR": {"n_trees": 5}}.get(family, {})
    m = make_calibrator(family, **extra).fit(X, y)
    path = tmp_path / "m.json"
    save_model(m, path, training_digest="abc")
    doc = json.loads(path.read_text())
    assert doc["family"] == family and doc["training_digest"] == "abc"
    back = load_model(path)
    assert np.array_equal(back.predict(X), m.predict(X))
    with pytest.raises(ValueError):
        model_from_dict({**model_to_dict(m), "schema": "other/9"})


def test_report_csv_marks_undefined(tmp_path):
    rows = [({"model": "SLR"}, evaluate([2, 2, 2], [1, 2, 3]))]
    write_report_rows(rows, tmp_path / "r.csv")
    (row,) = csv.DictReader((tmp_path / "r.csv").open())
    assert row["pearson_r"] == "undefined" and row["r2"] == "0.0" and row["model"] == "SLR"
