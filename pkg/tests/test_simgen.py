import json

import numpy as np
import pytest

from noisecal.calibrate import Dataset, evaluate, fit_slr
from noisecal.ingest import merge_streams
from noisecal.preprocess import CampaignPreprocessor, estimate_lag
from noisecal.simgen import RouteSpec, SensorErrorModel, default_scenarios, generate_campaign

STILL = RouteSpec(waypoints=((17.0, 78.0), (17.0, 78.0)), speed_profile=((60, 0.0),),
                  segment_base=(75.0,), fluctuation_sd=5.0, fluctuation_tau=20.0)


def test_identity_distortion_copies_reference():
    node, ref, truth = generate_campaign(STILL, SensorErrorModel(), 600, seed=1)
    assert np.array_equal(node.node_level, ref.ref_level)
    assert np.array_equal(truth.ambient, ref.ref_level)
    assert truth.lag == 0 and truth.velocity.size == 600


def test_planted_lag_is_estimated():
    node, ref, truth = generate_campaign(STILL, SensorErrorModel(lag=7, noise_sd=1.0), 1800, seed=2)
    assert estimate_lag(node.node_level, ref.ref_level, max_lag=120).lag == 7 == truth.lag


def test_known_distortion_recovered():
    err = SensorErrorModel(gain=0.6, bias=35.0, noise_sd=2.0)
    node, ref, _ = generate_campaign(STILL, err, 3600, seed=3)
    # regress node on reference: the forward model carries the noise in y
    m = fit_slr(Dataset(ref.ref_level, node.node_level))
    assert m.slope_ == pytest.approx(0.6, rel=0.05)
    assert m.intercept_ == pytest.approx(35.0, rel=0.05)


def test_determinism_and_seed_sensitivity():
    route, err = default_scenarios()["mobile"]
    a = generate_campaign(route, err, 900, seed=5)
    b = generate_campaign(route, err, 900, seed=5)
    c = generate_campaign(route, err, 900, seed=6)
    assert a[0].equals(b[0]) and a[1].equals(b[1])
    assert np.array_equal(a[2].outlier_timestamps, b[2].outlier_timestamps)
    assert not np.array_equal(a[0].node_level, c[0].node_level)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        generate_campaign(RouteSpec(waypoints=((17.0, 78.0),)), SensorErrorModel(), 600)
    with pytest.raises(ValueError):
        generate_campaign(STILL, SensorErrorModel(), 30)
    with pytest.raises(ValueError):
        generate_campaign(RouteSpec(waypoints=STILL.waypoints, speed_profile=((10, -1.0),)),
                          SensorErrorModel(), 600)
    with pytest.raises(ValueError):
        SensorErrorModel(noise_sd=-1)
    with pytest.raises(ValueError):
        SensorErrorModel(outlier_rate=0.2)


def test_scenario_shapes():
    sc = default_scenarios()
    assert {"lab", "mobile", "festival"} <= set(sc)
    _, lab_ref, _ = generate_campaign(*sc["lab"], 3600, seed=0)
    assert lab_ref.ref_level.min() >= 50 and lab_ref.ref_level.max() <= 90
    _, mob_ref, mob_truth = generate_campaign(*sc["mobile"], 3600, seed=0)
    assert mob_ref.ref_level.mean() > 75
    assert mob_truth.velocity.max() > 0
    _, fest_ref, _ = generate_campaign(*sc["festival"], 3600, seed=0)
    assert fest_ref.ref_level.var() > mob_ref.ref_level.var()


def test_zero_distortion_pipeline_is_exact():
    node, ref, _ = generate_campaign(STILL, SensorErrorModel(), 1200, seed=4)
    ws = CampaignPreprocessor().fit_transform(merge_streams(node, ref))
    d = Dataset([w.node_mean for w in ws], [w.ref_mean for w in ws])
    rep = evaluate(fit_slr(d).predict(d.X), d.y)
    assert rep.r2 == pytest.approx(1.0, abs=1e-9)
    assert rep.rmse == pytest.approx(0.0, abs=1e-9)


def test_truth_document(tmp_path):
    node, _, truth = generate_campaign(STILL, SensorErrorModel(lag=2, outlier_rate=0.01,
                                                               outlier_magnitude=10.0), 600, seed=7)
    truth.write(tmp_path / "truth.json")
    doc = json.loads((tmp_path / "truth.json").read_text())
    assert doc["lag"] == 2 and doc["error_model"]["outlier_rate"] == 0.01
    assert len(doc["velocity_mps"]) == 600
    assert doc["outlier_timestamps"] == truth.outlier_timestamps.tolist()
    assert set(doc["outlier_timestamps"]) <= set(node.timestamp.tolist())
