import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import make_campaign
from noisecal.analytics import hotspots
from noisecal.cli import main
from noisecal.geo import read_geojson
from noisecal.ingest import write_campaign


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def mobile(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    assert main(["gen", "--scenario", "mobile", "--duration", "3000", "--seed", "1",
                 "--out", str(out)]) == 0
    return out


def test_gen_outputs(mobile):
    assert {"node.csv", "ref.csv", "truth.json", "manifest.json"} <= {p.name for p in mobile.iterdir()}
    assert json.loads((mobile / "truth.json").read_text())["lag"] == 5


def test_calibrate_all_families(mobile, tmp_path):
    out = tmp_path / "cal"
    code = main(["calibrate", "--node", str(mobile / "node.csv"), "--ref", str(mobile / "ref.csv"),
                 "--n-trees", "10", "--velocity", "--out", str(out)])
    assert code == 0
    report = rows(out / "report.csv")
    models = {r["model"] for r in report}
    assert {"SLR", "MLR", "PR", "SR", "SVR", "DT", "RFR"} <= models
    assert len([r for r in report if r["model"] not in ("raw", "preprocessed")]) >= 7
    assert json.loads((out / "lag.json").read_text())["lag"] == 5
    per_fold = rows(out / "per_fold.csv")
    assert {r["fold"] for r in per_fold} == {str(k) for k in range(10)}
    model = json.loads((out / "model.json").read_text())
    assert model["family"] in models
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "calibrate" and manifest["config"]["folds"] == 10
    assert set(manifest["outputs"]) >= {"report.csv", "model.json"}
    assert len(manifest["inputs"]) == 2


def test_rfr_report_is_reproducible(mobile, tmp_path):
    args = ["calibrate", "--node", str(mobile / "node.csv"), "--ref", str(mobile / "ref.csv"),
            "--family", "RFR", "--n-trees", "10", "--depths", "4"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--jobs", "2"]) == 0
    assert (tmp_path / "a" / "report.csv").read_bytes() == (tmp_path / "b" / "report.csv").read_bytes()


def test_missing_input_exits_2(tmp_path, capsys):
    assert main(["calibrate", "--node", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 2
    assert "not found" in capsys.readouterr().err


@pytest.mark.parametrize("extra", [["--folds", "1"], ["--family", "XGB"], ["--window", "0"],
                                   ["--bogus"]])
def test_bad_options_exit_2(mobile, tmp_path, extra):
    args = ["calibrate", "--node", str(mobile / "node.csv"), "--out", str(tmp_path)]
    assert main(args + extra) == 2


def test_config_precedence(mobile, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"family": "SLR", "folds": 4, "fold-mode": "block"}))
    out = tmp_path / "o"
    args = ["calibrate", "--config", str(cfg), "--node", str(mobile / "node.csv"),
            "--ref", str(mobile / "ref.csv"), "--out", str(out)]
    assert main(args + ["--folds", "5"]) == 0
    conf = json.loads((out / "manifest.json").read_text())["config"]
    assert (conf["family"], conf["folds"], conf["fold_mode"]) == ("SLR", 5, "block")
    assert {r["model"] for r in rows(out / "report.csv")} == {"raw", "preprocessed", "SLR"}
    cfg.write_text(json.dumps({"colour": "red"}))
    assert main(args) == 2


def test_map_single_cell(tmp_path):
    src = tmp_path / "one.csv"
    write_campaign(make_campaign([92.0, 93.0, 91.0, 92.0, 92.5], lat=17.44, lon=78.35), src)
    out = tmp_path / "map"
    assert main(["map", "--input", str(src), "--out", str(out)]) == 0
    doc = json.loads((out / "grid.geojson").read_text())
    assert len(doc["features"]) == 1
    assert doc["features"][0]["properties"]["band"] == "gt90"
    assert len(rows(out / "hotspots.csv")) == 1


def test_map_hotspots_match_oracle(mobile, tmp_path):
    out = tmp_path / "map"
    assert main(["map", "--input", str(mobile / "ref.csv"), "--level", "ref", "--threshold", "90",
                 "--out", str(out)]) == 0
    grid = read_geojson(out / "grid.geojson")
    expect = hotspots(grid, 90.0)
    got = rows(out / "hotspots.csv")
    assert len(got) == len(expect) > 0
    for r, h in zip(got, expect):
        assert (int(r["row"]), int(r["col"])) == (h.row, h.col)
        assert float(r["mean_dba"]) == h.mean


def test_map_empty_campaign_exits_1(tmp_path):
    src = tmp_path / "empty.csv"
    src.write_text("datetime,latitude,longitude,node_dba\n")
    assert main(["map", "--input", str(src), "--out", str(tmp_path / "m")]) == 1


def _day(tmp_path, name, offset, day_class, start):
    rng = np.random.default_rng(len(name))
    vals = np.round(rng.uniform(60, 80, 1800), 1)
    c = make_campaign(vals + offset, start=start, metadata={"day_class": day_class}, id=name)
    path = tmp_path / f"{name}.csv"
    write_campaign(c, path)
    return path, c.node_level


def test_analyze_two_groups(tmp_path):
    a, va = _day(tmp_path, "wd", 2.4, "weekday", 1_714_974_000)
    b, vb = _day(tmp_path, "we", 0.0, "weekend", 1_715_405_000)
    out = tmp_path / "an"
    assert main(["analyze", "--input", str(a), str(b), "--out", str(out)]) == 0
    dist = {r["group"]: r for r in rows(out / "distributions.csv")}
    assert float(dist["weekday"]["mean"]) == pytest.approx(va.mean(), rel=1e-12)
    assert float(dist["weekend"]["mean"]) == pytest.approx(vb.mean(), rel=1e-12)
    (cmp,) = rows(out / "comparisons.csv")
    assert (cmp["group"], cmp["baseline"]) == ("weekend", "weekday")
    assert float(cmp["mean_diff"]) == pytest.approx(vb.mean() - va.mean(), rel=1e-9)
    # stationary logs carry no usable velocity
    assert (out / "velocity_trend.csv").read_text() == "skipped: no velocity\n"
    assert json.loads((out / "summary.json").read_text())["velocity_trend"] == "skipped: no velocity"
    assert {r["period"] for r in rows(out / "standards.csv")} <= {"day", "night"}


def test_analyze_unknown_zone_exits_2(tmp_path):
    a, _ = _day(tmp_path, "wd", 0.0, "weekday", 1_714_974_000)
    assert main(["analyze", "--input", str(a), "--zone", "harbour", "--out", str(tmp_path)]) == 2


def test_pipeline_on_scenario(tmp_path):
    out = tmp_path / "run"
    assert main(["pipeline", "--scenario", "festival", "--duration", "2000", "--family", "SLR,DT",
                 "--depths", "3", "--out", str(out)]) == 0
    for sub in ("data", "calibrate", "map", "analyze"):
        assert (out / sub / "manifest.json").is_file()
    assert (out / "manifest.json").is_file()


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "noisecal", "analyze", "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 2
    r = subprocess.run([sys.executable, "-m", "noisecal", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("noisecal ")
