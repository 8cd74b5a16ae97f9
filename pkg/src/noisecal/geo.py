"""GPS-derived velocity and metric grid binning of geotagged levels."""

import bisect
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._io import atomic_write
from .exceptions import AlignmentError
from .ingest import Campaign

EARTH_RADIUS_M = 6371008.8
DEFAULT_SPEED_CAP = 42.0
DEFAULT_THRESHOLDS = (75.0, 90.0)


def haversine(lat1, lon1, lat2, lon2):
    """Great-circle distance in metres (vectorized)."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = p2 - p1
    dlmb = np.radians(np.asarray(lon2) - np.asarray(lon1))
    h = np.sin(dphi / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.minimum(h, 1.0)))


@dataclass(frozen=True)
class VelocityPoint:
    timestamp: int
    speed: float
    segment_distance: float
    dt: float
    plausible: bool


class VelocityTrace(list):
    """List of VelocityPoint; ``skipped`` counts pairs dropped for a non-positive dt."""

    skipped = 0


def velocity_trace(c, cap=DEFAULT_SPEED_CAP):
    """Speed between consecutive fixes, stamped with the later fix's timestamp."""
    if len(c) < 2:
        raise AlignmentError("need at least 2 samples for a velocity trace")
    dt = np.diff(c.timestamp).astype(float)
    dist = haversine(c.latitude[:-1], c.longitude[:-1], c.latitude[1:], c.longitude[1:])
    ok = dt > 0
    if ok.sum() < 2:
        raise AlignmentError("fewer than 2 usable GPS pairs")
    out = VelocityTrace()
    out.skipped = int((~ok).sum())
    ts = c.timestamp[1:]
    for i in np.flatnonzero(ok):
        v = float(dist[i] / dt[i])
        out.append(VelocityPoint(int(ts[i]), v, float(dist[i]), float(dt[i]), v <= cap))
    return out


def join_velocity(series, v):
    """Attach ``velocity_mps`` (mean plausible speed inside each window).

    Windows without a plausible velocity point are left out of the result.
    """
    good = [p for p in v if p.plausible]
    ts = np.array([p.timestamp for p in good], dtype=np.int64)
    sp = np.array([p.speed for p in good])
    order = np.argsort(ts, kind="stable")
    ts, sp = ts[order], sp[order]
    csum = np.concatenate([[0.0], np.cumsum(sp)])
    out = []
    for s in series:
        lo = np.searchsorted(ts, s.window_start, side="left")
        hi = np.searchsorted(ts, s.window_start + s.window, side="left")
        if hi > lo:
            out.append(s.with_feature("velocity_mps", float((csum[hi] - csum[lo]) / (hi - lo))))
    if not out:
        raise AlignmentError("no window overlaps a plausible velocity point")
    return out


def sample_velocity(c, cap=DEFAULT_SPEED_CAP):
    """Per-sample speed: each fix takes the speed of the pair it closes.

    The first fix borrows the speed of the first pair. Implausible speeds are
    NaN.
    """
    v = velocity_trace(c, cap)
    pos = {p.timestamp: (p.speed if p.plausible else math.nan) for p in v}
    out = np.array([pos.get(int(t), math.nan) for t in c.timestamp])
    out[0] = out[1]
    return out


# --------------------------------------------------------------------------- #

@dataclass
class GridCell:
    row: int
    col: int
    mean: float
    max: float
    count: int
    centroid_lat: float
    centroid_lon: float


@dataclass
class NoiseGrid:
    """Square metric cells on a local equirectangular projection about ``origin``.

    Cell ``(0, 0)`` is centred on ``origin``.
    """

    cell_size: float
    origin: tuple
    cells: dict = field(default_factory=dict)
    statistic: str = "mean"

    def value(self, cell):
        return cell.mean if self.statistic == "mean" else cell.max

    def cell_polygon(self, row, col):
        """Closed counter-clockwise ring of ``[lon, lat]`` corners."""
        x0, y0 = (col - 0.5) * self.cell_size, (row - 0.5) * self.cell_size
        x1, y1 = x0 + self.cell_size, y0 + self.cell_size
        corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]
        return [list(unproject(x, y, self.origin)) for x, y in corners]

    def __len__(self):
        return len(self.cells)


def project(lat, lon, origin):
    lat0, lon0 = origin
    x = EARTH_RADIUS_M * np.radians(np.asarray(lon) - lon0) * math.cos(math.radians(lat0))
    y = EARTH_RADIUS_M * np.radians(np.asarray(lat) - lat0)
    return x, y


def unproject(x, y, origin):
    lat0, lon0 = origin
    lat = lat0 + math.degrees(y / EARTH_RADIUS_M)
    lon = lon0 + math.degrees(x / (EARTH_RADIUS_M * math.cos(math.radians(lat0))))
    return lon, lat


def _points(source, levels, field_name):
    if isinstance(source, Campaign):
        lat, lon = source.latitude, source.longitude
        vals = getattr(source, field_name) if levels is None else levels
    else:
        source = list(source)
        lat = np.array([s.latitude for s in source], dtype=float)
        lon = np.array([s.longitude for s in source], dtype=float)
        if levels is None:
            attr = {"node_level": "node_mean", "ref_level": "ref_mean"}.get(field_name, field_name)
            vals = [getattr(s, attr) for s in source]
    vals = np.asarray(vals, dtype=float)
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    if vals.shape != lat.shape:
        raise ValueError("levels must match the number of samples")
    keep = np.isfinite(vals) & np.isfinite(lat) & np.isfinite(lon)
    return lat[keep], lon[keep], vals[keep]


def build_noise_grid(source, cell_size=100.0, statistic="mean", levels=None, field="node_level"):
    """Bin geotagged levels into square cells of ``cell_size`` metres.

    ``source`` is a Campaign or a sequence of averaged windows. ``levels``
    overrides the binned values (e.g. calibrated levels); otherwise ``field``
    names the level column.
    """
    if not cell_size > 0:
        raise ValueError("cell_size must be positive")
    if statistic not in ("mean", "max"):
        raise ValueError(f"unknown statistic {statistic!r}")
    lat, lon, vals = _points(source, levels, field)
    if vals.size == 0:
        raise ValueError("no samples to bin")
    if (np.abs(lat) > 90).any() or (np.abs(lon) > 180).any():
        raise ValueError("coordinates out of range")
    # fsum keeps the anchor, and hence the binning, independent of input order
    origin = (math.fsum(lat) / lat.size, math.fsum(lon) / lon.size)
    x, y = project(lat, lon, origin)
    # half-cell shift puts the centroid mid-cell, so a compact cluster stays whole
    rows = np.floor(y / cell_size + 0.5).astype(np.int64)
    cols = np.floor(x / cell_size + 0.5).astype(np.int64)
    keys = np.stack([rows, cols], axis=1)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(inverse, kind="stable")
    bounds = np.concatenate([[0], np.cumsum(np.bincount(inverse, minlength=len(uniq)))])
    cells = {}
    for k, (r, c) in enumerate(uniq):
        idx = order[bounds[k]:bounds[k + 1]]
        n = idx.size
        cells[(int(r), int(c))] = GridCell(
            int(r), int(c),
            mean=math.fsum(vals[idx]) / n,
            max=float(vals[idx].max()),
            count=int(n),
            centroid_lat=math.fsum(lat[idx]) / n,
            centroid_lon=math.fsum(lon[idx]) / n,
        )
    return NoiseGrid(float(cell_size), origin, cells, statistic)


def band_label(value, thresholds=DEFAULT_THRESHOLDS):
    """``le75``, ``75to90`` or ``gt90`` style label for the default cut points."""
    t = sorted(thresholds)
    k = bisect.bisect_left(t, value)

    def f(v):
        return f"{v:g}"

    if k == 0:
        return f"le{f(t[0])}"
    if k == len(t):
        return f"gt{f(t[-1])}"
    return f"{f(t[k - 1])}to{f(t[k])}"


def grid_to_geojson(g, thresholds=DEFAULT_THRESHOLDS):
    features = []
    for (r, c), cell in sorted(g.cells.items()):
        features.append({
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": [g.cell_polygon(r, c)]},
            "properties": {
                "row": r, "col": c,
                "mean_dba": cell.mean, "max_dba": cell.max, "count": cell.count,
                "centroid_lat": cell.centroid_lat, "centroid_lon": cell.centroid_lon,
                "band": band_label(g.value(cell), thresholds),
            },
        })
    return {
        "type": "FeatureCollection",
        "properties": {"cell_size_m": g.cell_size, "origin": list(g.origin),
                       "statistic": g.statistic, "thresholds": list(thresholds)},
        "features": features,
    }


def export_geojson(g, path, thresholds=DEFAULT_THRESHOLDS):
    """Write the grid as a GeoJSON FeatureCollection of cell polygons."""
    if not g.cells:
        raise ValueError("grid is empty")
    doc = grid_to_geojson(g, thresholds)
    with atomic_write(path) as fh:
        json.dump(doc, fh)
        fh.write("\n")


def read_geojson(path):
    """Load an exported grid back into a NoiseGrid."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    meta = doc.get("properties", {})
    cells = {}
    for f in doc["features"]:
        p = f["properties"]
        cells[(p["row"], p["col"])] = GridCell(p["row"], p["col"], p["mean_dba"], p["max_dba"],
                                               p["count"], p["centroid_lat"], p["centroid_lon"])
    return NoiseGrid(meta.get("cell_size_m", math.nan), tuple(meta.get("origin", (math.nan,) * 2)),
                     cells, meta.get("statistic", "mean"))
