"""Versioned JSON documents for fitted calibrators and CSV export of reports."""

import csv
import json

from .._io import atomic_write
from .metrics import METRIC_FIELDS

SCHEMA = "noisecal.calibration-model/1"


def model_to_dict(model, training_digest=None):
    from . import FAMILIES

    if model.family not in FAMILIES:
        raise ValueError(f"unknown family {model.family!r}")
    return {
        "schema": SCHEMA,
        "family": model.family,
        "hyperparams": model.get_params(),
        "n_features": int(model.n_features_in_),
        "params": model.get_learned(),
        "training_digest": training_digest,
    }


def model_from_dict(doc):
    from . import FAMILIES

    if doc.get("schema") != SCHEMA:
        raise ValueError(f"unsupported model schema {doc.get('schema')!r}")
    model = FAMILIES[doc["family"]](**doc["hyperparams"])
    model.n_features_in_ = doc["n_features"]
    model.set_learned(doc["params"])
    return model


def save_model(model, path, training_digest=None):
    with atomic_write(path) as fh:
        json.dump(model_to_dict(model, training_digest), fh, indent=1)
        fh.write("\n")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def _fmt(v):
    if v is None:
        return "undefined"
    if isinstance(v, float):
        return repr(v)
    return v


def write_report_rows(rows, path, extra_fields=("model",)):
    """Write ``(labels, EvalReport)`` rows; ``labels`` is a dict keyed by ``extra_fields``."""
    with atomic_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*extra_fields, *METRIC_FIELDS])
        for labels, rep in rows:
            w.writerow([labels.get(f, "") for f in extra_fields]
                       + [_fmt(getattr(rep, f)) for f in METRIC_FIELDS])
