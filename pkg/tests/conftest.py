import time

import numpy as np
import pytest

from noisecal.ingest import Campaign

# one line per acceptance criterion, printed after the run
_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    entry = _CRITERIA.setdefault(number, {"title": title, "status": "PASS", "seconds": 0.0,
                                          "detail": ""})
    if rep.when == "call":
        entry["seconds"] += rep.duration
    if rep.skipped and entry["status"] == "PASS":
        entry["status"] = "SKIP"
        entry["detail"] = str(rep.longrepr[-1]) if isinstance(rep.longrepr, tuple) else ""
    elif rep.failed:
        entry["status"] = "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        line = f"criterion {number} {e['title']}: {e['status']} ({e['seconds']:.1f} s)"
        if e["detail"]:
            line += f" - {e['detail']}"
        terminalreporter.write_line(line)


@pytest.fixture
def stopwatch():
    t0 = time.perf_counter()
    return lambda: time.perf_counter() - t0


def make_campaign(node, ref=None, start=1_714_554_000, lat=17.4454, lon=78.3489, id="c",
                  metadata=None, timestamps=None):
    node = np.asarray(node, dtype=float)
    n = node.size
    ts = np.arange(start, start + n) if timestamps is None else np.asarray(timestamps)
    ref = np.full(n, np.nan) if ref is None else np.asarray(ref, dtype=float)
    lat = np.broadcast_to(np.asarray(lat, dtype=float), (n,))
    lon = np.broadcast_to(np.asarray(lon, dtype=float), (n,))
    return Campaign(id, ts, lat, lon, node, ref, dict(metadata or {}))
