"""Command-line entry point: ``noisecal {gen,calibrate,map,analyze,pipeline}``.

Every run writes ``manifest.json`` into its output directory with the resolved
configuration, the sha256 of each input and output file, the seed and the
package version. Exit codes: 0 success, 1 pipeline failure, 2 usage or
configuration error.
"""

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np
from sklearn.base import clone

from . import __version__
from ._io import atomic_write, file_digest
from .analytics import (STANDARDS, compare_distributions, hotspots, standards_check, summarize,
                        temporal_profile, velocity_noise_trend)
from .calibrate import (FAMILIES, cross_validate, evaluate, load_model, make_calibrator,
                        save_model, to_dataset)
from .calibrate.io import write_report_rows
from .exceptions import ConfigError, NoisecalError
from .geo import (build_noise_grid, export_geojson, join_velocity, sample_velocity,
                  velocity_trace)
from .ingest import (DEFAULT_UTC_OFFSET, load_campaign, merge_streams, parse_utc_offset,
                     write_campaign)
from .preprocess import CampaignPreprocessor, clean_campaign, time_average, write_aligned_csv
from .simgen import default_scenarios, generate_campaign

FAMILY_ORDER = ("SLR", "MLR", "PR", "SR", "SVR", "DT", "RFR")
VELOCITY = "velocity_mps"

COMMON = dict(config=None, out=None, seed=0, utc_offset=DEFAULT_UTC_OFFSET)
PREPROCESS = dict(window=10, fence_factor=1.5, max_lag=120, min_count=5, averaging="arithmetic")
DEFAULTS = {
    "gen": dict(scenario="mobile", duration=50000),
    "calibrate": dict(node=None, ref=None, merged=None, family="all", folds=10,
                      fold_mode="shuffle", depths="3,4,5", n_trees=100, pr_degree=4,
                      svr_c=10.0, svr_epsilon=0.5, velocity=False, jobs=1, **PREPROCESS),
    "map": dict(input=None, model=None, level="node", cell_size=100.0, statistic="mean",
                threshold=90.0, fence_factor=1.5),
    "analyze": dict(input=None, model=None, level="auto", group_by="day_class", bucket=3600,
                    zone="commercial", period="both", velocity_bin=1.0, window=10, min_count=5),
}
DEFAULTS["pipeline"] = {**DEFAULTS["calibrate"], **DEFAULTS["map"], **DEFAULTS["analyze"],
                        "scenario": None, "duration": 50000, "model": None, "input": None,
                        "level": "auto"}
for _d in DEFAULTS.values():
    for _k, _v in COMMON.items():
        _d.setdefault(_k, _v)


# --------------------------------------------------------------------------- #
# argument parsing and configuration

def _add_common(p):
    p.add_argument("--config", help="JSON file supplying any option; the command line wins")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--utc-offset", help="offset of the log clocks, e.g. +05:30")


def _add_preprocess(p):
    p.add_argument("--window", type=int, help="averaging window in seconds (10)")
    p.add_argument("--fence-factor", type=float, help="IQR fence multiplier (1.5)")
    p.add_argument("--max-lag", type=int, help="lag search half-width in seconds (120)")
    p.add_argument("--min-count", type=int, help="minimum samples per window (5)")
    p.add_argument("--averaging", choices=("arithmetic", "energetic"))


def _add_calibrate(p):
    p.add_argument("--node", help="node log (node-csv or merged-csv)")
    p.add_argument("--ref", help="reference log (ref-csv)")
    p.add_argument("--merged", help="merged log carrying both levels")
    p.add_argument("--family", help="model family, comma list, or 'all'")
    p.add_argument("--folds", type=int)
    p.add_argument("--fold-mode", choices=("shuffle", "block"))
    p.add_argument("--depths", help="comma list of DT/RFR depths (3,4,5)")
    p.add_argument("--n-trees", type=int)
    p.add_argument("--pr-degree", type=int)
    p.add_argument("--svr-c", type=float)
    p.add_argument("--svr-epsilon", type=float)
    p.add_argument("--velocity", action="store_true",
                   help="also fit multi-feature families with GPS velocity")
    p.add_argument("--jobs", type=int, help="parallel jobs for forest fitting")
    _add_preprocess(p)


def _add_map(p):
    p.add_argument("--model", help="fitted model.json; raw levels are mapped when omitted")
    p.add_argument("--level", help="node, ref (map) or auto (analyze) when no model is given")
    p.add_argument("--cell-size", type=float, help="cell edge in metres (100)")
    p.add_argument("--statistic", choices=("mean", "max"))
    p.add_argument("--threshold", type=float, help="hotspot threshold in dBA (90)")


def _add_analyze(p):
    p.add_argument("--group-by", help="comma list of metadata keys (day_class)")
    p.add_argument("--bucket", type=int, help="time-of-day bucket in seconds (3600)")
    p.add_argument("--zone", help=f"one of {', '.join(STANDARDS)}")
    p.add_argument("--period", choices=("day", "night", "both"))
    p.add_argument("--velocity-bin", type=float)


def build_parser():
    parser = argparse.ArgumentParser(prog="noisecal", allow_abbrev=False,
                                     argument_default=argparse.SUPPRESS,
                                     description="Calibrate, map and analyse mobile noise campaigns.")
    parser.add_argument("--version", action="version", version=f"noisecal {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    kw = dict(allow_abbrev=False, argument_default=argparse.SUPPRESS)

    p = sub.add_parser("gen", help="write a synthetic scenario", **kw)
    _add_common(p)
    p.add_argument("--scenario", help="lab, mobile or festival")
    p.add_argument("--duration", type=int, help="seconds of 1 Hz data")

    p = sub.add_parser("calibrate", help="cross-validate calibrators", **kw)
    _add_common(p)
    _add_calibrate(p)

    p = sub.add_parser("map", help="grid a campaign into GeoJSON cells", **kw)
    _add_common(p)
    p.add_argument("--input", help="campaign log")
    p.add_argument("--fence-factor", type=float)
    _add_map(p)

    p = sub.add_parser("analyze", help="temporal, distribution, velocity and standards analyses",
                       **kw)
    _add_common(p)
    p.add_argument("--input", nargs="+", help="one or more campaign logs")
    p.add_argument("--model")
    p.add_argument("--level")
    p.add_argument("--window", type=int)
    p.add_argument("--min-count", type=int)
    _add_analyze(p)

    p = sub.add_parser("pipeline", help="calibrate, map and analyze in one run", **kw)
    _add_common(p)
    p.add_argument("--scenario", help="generate this scenario instead of reading logs")
    p.add_argument("--duration", type=int)
    _add_calibrate(p)
    p.add_argument("--cell-size", type=float)
    p.add_argument("--statistic", choices=("mean", "max"))
    p.add_argument("--threshold", type=float)
    _add_analyze(p)
    return parser


def resolve_config(command, cli):
    """Defaults, overridden by the ``--config`` file, overridden by the command line."""
    cfg = dict(DEFAULTS[command])
    path = cli.get("config")
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        for key, value in doc.items():
            k = key.replace("-", "_")
            if k == "command":
                continue
            if k not in cfg:
                raise ConfigError(f"unknown config key {key!r} for {command}")
            cfg[k] = value
    cfg.update({k: v for k, v in cli.items() if k != "command"})
    cfg["command"] = command
    validate_config(cfg)
    return cfg


def _positive(cfg, *keys):
    for k in keys:
        if k in cfg and cfg[k] is not None and not cfg[k] > 0:
            raise ConfigError(f"{k.replace('_', '-')} must be positive")


def _exists(path, what):
    if not path:
        raise ConfigError(f"missing {what}")
    if not Path(path).is_file():
        raise ConfigError(f"{what} not found: {path}")


def _families(spec):
    if isinstance(spec, (list, tuple)):
        names = [str(s).upper() for s in spec]
    elif str(spec).lower() == "all":
        names = list(FAMILY_ORDER)
    else:
        names = [s.strip().upper() for s in str(spec).split(",") if s.strip()]
    bad = [n for n in names if n not in FAMILIES]
    if bad or not names:
        raise ConfigError(f"unknown model family {','.join(bad) or spec!r}; "
                          f"choose from {', '.join(FAMILY_ORDER)} or all")
    return [f for f in FAMILY_ORDER if f in names]


def _depths(spec):
    if isinstance(spec, (list, tuple)):
        vals = list(spec)
    else:
        vals = [s for s in str(spec).split(",") if s.strip()]
    try:
        depths = sorted({int(v) for v in vals})
    except ValueError:
        raise ConfigError(f"invalid depths {spec!r}") from None
    if not depths or depths[0] < 1:
        raise ConfigError("depths must be positive integers")
    return depths


def validate_config(cfg):
    cmd = cfg["command"]
    if not cfg.get("out"):
        raise ConfigError("--out is required")
    try:
        parse_utc_offset(cfg["utc_offset"])
    except ValueError as e:
        raise ConfigError(str(e)) from None
    _positive(cfg, "window", "max_lag", "min_count", "n_trees", "pr_degree", "svr_c",
              "cell_size", "bucket", "velocity_bin", "duration", "jobs", "fence_factor")
    if cfg.get("svr_epsilon") is not None and cfg.get("svr_epsilon", 0) < 0:
        raise ConfigError("svr-epsilon must be non-negative")
    if cmd in ("gen", "pipeline") and cfg.get("scenario") is not None:
        if cfg["scenario"] not in default_scenarios():
            raise ConfigError(f"unknown scenario {cfg['scenario']!r}; "
                              f"choose from {', '.join(default_scenarios())}")
    if cmd in ("calibrate", "pipeline"):
        _families(cfg["family"])
        _depths(cfg["depths"])
        if cfg["folds"] < 2:
            raise ConfigError("folds must be at least 2")
        if not (cmd == "pipeline" and cfg.get("scenario")):
            if cfg.get("merged"):
                _exists(cfg["merged"], "merged log")
            else:
                _exists(cfg.get("node"), "node log")
                if cfg.get("ref"):
                    _exists(cfg["ref"], "reference log")
    if cmd == "map":
        _exists(cfg.get("input"), "input log")
        if cfg["level"] not in ("node", "ref"):
            raise ConfigError("level must be node or ref")
    if cmd in ("map", "analyze") and cfg.get("model"):
        _exists(cfg["model"], "model file")
    if cmd == "analyze":
        inputs = cfg.get("input")
        if not inputs:
            raise ConfigError("missing input logs")
        if isinstance(inputs, str):
            cfg["input"] = [inputs]
        for p in cfg["input"]:
            _exists(p, "input log")
        if cfg["level"] not in ("auto", "node", "ref"):
            raise ConfigError("level must be auto, node or ref")
    if cmd in ("analyze", "pipeline"):
        if cfg["zone"] not in STANDARDS:
            raise ConfigError(f"unknown zone {cfg['zone']!r}; choose from {', '.join(STANDARDS)}")
        if cfg["bucket"] > 86400:
            raise ConfigError("bucket must not exceed 86400 s")


# --------------------------------------------------------------------------- #
# shared helpers

def _digests(paths):
    return {str(p): file_digest(p) for p in paths if p}


def write_manifest(out, cfg, inputs, outputs):
    out = Path(out)
    doc = {
        "tool": "noisecal",
        "version": __version__,
        "command": cfg["command"],
        "seed": cfg["seed"],
        "config": {k: v for k, v in sorted(cfg.items())},
        "inputs": _digests(inputs),
        "outputs": {Path(p).name: file_digest(p) for p in outputs},
    }
    with atomic_write(out / "manifest.json") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(v):
    if v is None:
        return "undefined"
    if isinstance(v, float):
        return repr(v)
    return v


def _write_csv(path, header, rows):
    with atomic_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _load_pair(cfg):
    off = cfg["utc_offset"]
    if cfg.get("merged"):
        return load_campaign(cfg["merged"], utc_offset=off), [cfg["merged"]]
    node = load_campaign(cfg["node"], utc_offset=off)
    if not cfg.get("ref"):
        return node, [cfg["node"]]
    ref = load_campaign(cfg["ref"], utc_offset=off)
    return merge_streams(node, ref), [cfg["node"], cfg["ref"]]


def _param_text(est):
    """Hyperparameters as ``key=value`` pairs; unreported ones keep the package defaults."""
    params = est.get_params()
    params.pop("column_names", None)
    params.pop("n_jobs", None)
    return ";".join(f"{k}={v}" for k, v in sorted(params.items()))


def _velocity_ok(series):
    v = [s.features[VELOCITY] for s in series if VELOCITY in s.features]
    return len(v) >= 10 and float(np.var(v)) > 0


def calibrated_levels(c, model=None, level="node"):
    """Per-second levels of ``c`` and the mask of samples that have one.

    With a model, node readings (plus GPS velocity for two-column models) are
    calibrated; otherwise the ``level`` column is returned as is.
    """
    if model is None:
        vals = np.array(c.ref_level if level == "ref" else c.node_level, dtype=float)
        return vals, np.isfinite(vals)
    cols = [c.node_level]
    if model.n_features_in_ == 2:
        cols.append(sample_velocity(c))
    elif model.n_features_in_ != 1:
        raise NoisecalError(f"cannot supply {model.n_features_in_} features from a campaign")
    X = np.column_stack(cols)
    ok = np.isfinite(X).all(axis=1)
    vals = np.full(len(c), np.nan)
    if ok.any():
        vals[ok] = model.predict(X[ok])
    return vals, ok


# --------------------------------------------------------------------------- #
# subcommands

def run_gen(cfg):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    name = cfg["scenario"]
    route, err = default_scenarios()[name]
    node, ref, truth = generate_campaign(route, err, cfg["duration"], cfg["seed"], campaign_id=name)
    paths = [out / "node.csv", out / "ref.csv", out / "truth.json"]
    write_campaign(node, paths[0], cfg["utc_offset"])
    write_campaign(ref, paths[1], cfg["utc_offset"])
    with atomic_write(paths[2]) as fh:
        json.dump(truth.to_dict(), fh)
        fh.write("\n")
    write_manifest(out, cfg, [], paths)
    print(f"gen: {name} scenario, {len(node)} s, lag {truth.lag} s -> {out}")
    return paths


def _candidates(cfg, d, dv):
    """``(labels, estimator, dataset)`` for each requested family and depth."""
    seed, depths = cfg["seed"], _depths(cfg["depths"])
    hyper = {
        "PR": dict(degree=cfg["pr_degree"]),
        "SVR": dict(C=cfg["svr_c"], epsilon=cfg["svr_epsilon"]),
    }
    out = []
    for fam in _families(cfg["family"]):
        sets = [("node", d)]
        if fam == "MLR":
            sets = [("node+" + VELOCITY, dv)] if dv is not None else []
            if not sets:
                print("calibrate: MLR skipped: no velocity")
        elif cfg["velocity"] and dv is not None and FAMILIES[fam].uses_all_columns:
            sets.append(("node+" + VELOCITY, dv))
        for feats, ds in sets:
            if fam == "MLR":
                est = make_calibrator(fam, column_names=list(ds.column_names))
                out.append(({"model": fam, "features": feats, "depth": ""}, est, ds))
            elif fam in ("DT", "RFR"):
                for depth in depths:
                    kw = dict(max_depth=depth)
                    if fam == "RFR":
                        kw.update(n_trees=cfg["n_trees"], seed=seed, n_jobs=cfg["jobs"])
                    est = make_calibrator(fam, **kw)
                    out.append(({"model": fam, "features": feats, "depth": depth}, est, ds))
            else:
                est = make_calibrator(fam, **hyper.get(fam, {}))
                out.append(({"model": fam, "features": feats, "depth": ""}, est, ds))
    return out


def run_calibrate(cfg, campaign=None, inputs=()):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    if campaign is None:
        campaign, inputs = _load_pair(cfg)
    if not np.isfinite(campaign.ref_level).any():
        raise NoisecalError("calibration needs reference levels; pass --ref or --merged")
    pp = CampaignPreprocessor(cfg["fence_factor"], cfg["max_lag"], cfg["window"],
                              cfg["min_count"], cfg["averaging"]).fit(campaign)
    aligned = pp.align(campaign)
    series = time_average(aligned, cfg["window"], cfg["min_count"], cfg["averaging"])
    try:
        series_v = join_velocity(series, velocity_trace(aligned))
    except ValueError:
        series_v = []
    d = to_dataset(series)
    dv = to_dataset(series_v, [VELOCITY]) if _velocity_ok(series_v) else None

    paired = campaign.paired
    rows = [
        ({"model": "raw", "features": "node", "depth": ""},
         evaluate(campaign.node_level[paired], campaign.ref_level[paired])),
        ({"model": "preprocessed", "features": "node", "depth": ""}, evaluate(d.X[:, 0], d.y)),
    ]
    fold_rows = []
    best = None
    for labels, est, ds in _candidates(cfg, d, dv):
        labels["params"] = _param_text(est)
        rep = cross_validate(est, ds, cfg["folds"], cfg["seed"], cfg["fold_mode"])
        rows.append((labels, rep))
        for k, f in enumerate(rep.per_fold):
            fold_rows.append(({**labels, "fold": k}, f))
        score = -math.inf if rep.r2 is None else rep.r2
        if best is None or score > best[0]:
            best = (score, labels, est, ds)
        depth = f" depth {labels['depth']}" if labels["depth"] != "" else ""
        r2 = "undefined" if rep.r2 is None else f"{rep.r2:.3f}"
        print(f"calibrate: {labels['model']}{depth} [{labels['features']}] "
              f"r2={r2} rmse={rep.rmse:.3f} mae={rep.mae:.3f}")
    if best is None:
        raise NoisecalError("no model could be evaluated")

    fields = ("model", "features", "depth", "params")
    report, per_fold = out / "report.csv", out / "per_fold.csv"
    write_report_rows(rows, report, fields)
    write_report_rows(fold_rows, per_fold, (*fields, "fold"))
    _, labels, est, ds = best
    model = clone(est).fit(ds.X, ds.y)
    model_path = out / "model.json"
    save_model(model, model_path, training_digest=ds.digest())
    aligned_path = out / "aligned.csv"
    write_aligned_csv(series_v if dv is not None else series, aligned_path)
    with atomic_write(out / "lag.json") as fh:
        json.dump({"lag": pp.lag_.lag, "peak_correlation": pp.lag_.peak_correlation,
                   "at_boundary": pp.lag_.at_boundary, "outliers_node": pp.outliers_[0],
                   "outliers_ref": pp.outliers_[1], "windows": len(d)}, fh, indent=2)
        fh.write("\n")
    outputs = [report, per_fold, model_path, aligned_path, out / "lag.json"]
    write_manifest(out, cfg, inputs, outputs)
    print(f"calibrate: lag {pp.lag_.lag} s, {len(d)} windows; best {labels['model']} "
          f"[{labels['features']}] -> {model_path}")
    return model_path


def run_map(cfg, campaign=None, inputs=None):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    if campaign is None:
        campaign = load_campaign(cfg["input"], utc_offset=cfg["utc_offset"])
        inputs = [cfg["input"]]
    model = load_model(cfg["model"]) if cfg.get("model") else None
    inputs = list(inputs) + ([cfg["model"]] if model is not None else [])
    if len(campaign) == 0:
        raise NoisecalError("empty campaign")
    if campaign.has_node and np.isfinite(campaign.node_level).sum() >= 4:
        campaign = clean_campaign(campaign, cfg["fence_factor"])
    levels, ok = calibrated_levels(campaign, model, cfg["level"])
    if not ok.any():
        raise NoisecalError("no samples carry the requested level")
    sub = campaign.subset(ok)
    grid = build_noise_grid(sub, cfg["cell_size"], cfg["statistic"], levels=levels[ok])
    geo_path, hot_path = out / "grid.geojson", out / "hotspots.csv"
    export_geojson(grid, geo_path)
    hits = hotspots(grid, cfg["threshold"])
    _write_csv(hot_path, ("row", "col", "centroid_lat", "centroid_lon", "mean_dba", "max_dba",
                          "count"),
               [(h.row, h.col, h.centroid_lat, h.centroid_lon, h.mean, h.max, h.count)
                for h in hits])
    write_manifest(out, cfg, inputs, [geo_path, hot_path])
    print(f"map: {len(grid)} cells of {cfg['cell_size']:g} m, {len(hits)} hotspots "
          f">= {cfg['threshold']:g} dBA -> {geo_path}")
    return geo_path


def _analysis_level(cfg, campaigns, model):
    if model is not None:
        return "calibrated"
    if cfg["level"] != "auto":
        return cfg["level"]
    return "ref" if all(np.isfinite(c.ref_level).any() for c in campaigns) else "node"


def run_analyze(cfg, campaigns=None, inputs=None):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    if campaigns is None:
        campaigns = [load_campaign(p, utc_offset=cfg["utc_offset"]) for p in cfg["input"]]
        inputs = list(cfg["input"])
    model = load_model(cfg["model"]) if cfg.get("model") else None
    inputs = list(inputs) + ([cfg["model"]] if model is not None else [])
    level = _analysis_level(cfg, campaigns, model)
    keys = cfg["group_by"]
    keys = tuple(keys) if isinstance(keys, (list, tuple)) else tuple(
        k.strip() for k in str(keys).split(",") if k.strip())

    # every analysis reads the chosen level from the node column of a copy
    leveled = []
    for c in campaigns:
        vals, ok = calibrated_levels(c, model, "node" if level == "calibrated" else level)
        if ok.any():
            leveled.append(c.subset(ok, node_level=vals[ok], ref_level=np.full(int(ok.sum()),
                                                                                np.nan)))
    if not leveled:
        raise NoisecalError("no samples carry the requested level")
    off = cfg["utc_offset"]

    profiles = temporal_profile(leveled, cfg["bucket"], keys, level="node_level", utc_offset=off)
    prof_path = out / "profiles.csv"
    _write_csv(prof_path, ("group", "bucket_start_s", "mean", "variance", "count"),
               [(p.group, p.bucket, p.mean, p.variance, p.count) for p in profiles])

    groups = {}
    for c in leveled:
        label = "-".join(str(c.metadata[k]) for k in keys)
        groups.setdefault(label, []).append(c.node_level)
    labels = sorted(groups)
    values = {k: np.concatenate(v) for k, v in groups.items()}
    summaries = [summarize(values[k], k) for k in labels]
    dist_path = out / "distributions.csv"
    _write_csv(dist_path, ("group", "mean", "variance", "min", "max", "count"),
               [(s.label, s.mean, s.variance, s.min, s.max, s.count) for s in summaries])
    comparisons = []
    for other in labels[1:]:
        _, _, delta = compare_distributions(values[other], values[labels[0]], (other, labels[0]))
        comparisons.append((other, labels[0], delta["mean_diff"], delta["var_ratio"]))
    cmp_path = out / "comparisons.csv"
    _write_csv(cmp_path, ("group", "baseline", "mean_diff", "var_ratio"), comparisons)

    windows = []
    for c in leveled:
        try:
            w = time_average(c, cfg["window"], cfg["min_count"], require_ref=False)
            windows.extend(join_velocity(w, velocity_trace(c)))
        except ValueError:
            continue
    vel_path = out / "velocity_trend.csv"
    trend = None
    if _velocity_ok(windows):
        try:
            trend = velocity_noise_trend(windows, cfg["velocity_bin"], level="node_mean")
        except ValueError:
            trend = None
    if trend is None:
        with atomic_write(vel_path) as fh:
            fh.write("skipped: no velocity\n")
        trend_doc = "skipped: no velocity"
    else:
        _write_csv(vel_path, ("velocity_bin_mps", "mean_level", "count"), trend.bins)
        trend_doc = {"slope_db_per_mps": trend.slope, "intercept": trend.intercept,
                     "slope_stderr": trend.slope_stderr, "pearson_r": trend.pearson_r,
                     "p_value": trend.p_value, "n": trend.n}

    periods = ("day", "night") if cfg["period"] == "both" else (cfg["period"],)
    std_rows = []
    for c in leveled:
        for period in periods:
            try:
                rep = standards_check(c.node_level, cfg["zone"], period, c.timestamp, off)
            except ValueError:
                continue
            std_rows.append((c.id, rep.zone, rep.period, rep.limit, rep.n, rep.n_exceed,
                             rep.fraction, rep.leq, rep.leq_exceeds))
    std_path = out / "standards.csv"
    _write_csv(std_path, ("campaign", "zone", "period", "limit_dba", "n", "n_exceed",
                          "fraction", "leq", "leq_exceeds"), std_rows)

    summary = {
        "level": level,
        "groups": {s.label: {"mean": s.mean, "variance": s.variance, "count": s.count}
                   for s in summaries},
        "velocity_trend": trend_doc,
        "standards": [dict(zip(("campaign", "period", "leq", "leq_exceeds"),
                               (r[0], r[2], r[7], r[8]))) for r in std_rows],
    }
    sum_path = out / "summary.json"
    with atomic_write(sum_path) as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_manifest(out, cfg, inputs, [prof_path, dist_path, cmp_path, vel_path, std_path,
                                      sum_path])
    for s in summaries:
        print(f"analyze: {s.label}: mean {s.mean:.1f} dBA, variance {s.variance:.1f} "
              f"({s.count} samples)")
    if trend is None:
        print("analyze: velocity trend skipped: no velocity")
    else:
        print(f"analyze: velocity slope {trend.slope:.3f} dBA per m/s (p={trend.p_value:.3g})")
    return sum_path


def run_pipeline(cfg):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    if cfg.get("scenario"):
        gen_cfg = {**cfg, "out": str(out / "data"), "command": "gen"}
        node_path, ref_path, _ = run_gen(gen_cfg)
        cfg = {**cfg, "node": str(node_path), "ref": str(ref_path), "merged": None}
    campaign, inputs = _load_pair(cfg)
    model_path = run_calibrate({**cfg, "out": str(out / "calibrate"), "command": "calibrate"},
                               campaign, inputs)
    stage = {**cfg, "model": str(model_path)}
    geo = run_map({**stage, "out": str(out / "map"), "command": "map"}, campaign, inputs)
    summ = run_analyze({**stage, "out": str(out / "analyze"), "command": "analyze"},
                       [campaign], inputs)
    products = [model_path, geo, summ]
    write_manifest(out, cfg, inputs, products)
    return products


COMMANDS = {"gen": run_gen, "calibrate": run_calibrate, "map": run_map,
            "analyze": run_analyze, "pipeline": run_pipeline}


def main(argv=None):
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    cli = vars(ns)
    command = cli.pop("command")
    try:
        cfg = resolve_config(command, cli)
    except ConfigError as e:
        print(f"noisecal {command}: config error: {e}", file=sys.stderr)
        return 2
    try:
        COMMANDS[command](cfg)
    except (NoisecalError, ValueError, OSError) as e:
        print(f"noisecal {command}: error: {e}", file=sys.stderr)
        return 1
    return 0


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
