"""Campaign log parsing, merging and persistence.

Logs are CSV files with the header ``datetime,latitude,longitude,node_dba[,ref_dba]``.
Timestamps are local wall-clock times written as ``dd:mm:yyyy hh:mm:ss`` (a dash
separated date is accepted too) and are converted to UTC epoch seconds with a
configurable offset.
"""

import calendar
import csv
import json
import re
import sys
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from ._io import atomic_write
from .exceptions import AlignmentError, LogParseError

LEVEL_RANGE = (30.0, 130.0)
DEFAULT_UTC_OFFSET = "+05:30"

HEADERS = {
    "node-csv": ("datetime", "latitude", "longitude", "node_dba"),
    "ref-csv": ("datetime", "latitude", "longitude", "ref_dba"),
    "merged-csv": ("datetime", "latitude", "longitude", "node_dba", "ref_dba"),
}

_TS_RE = re.compile(r"^(\d{2})([:-])(\d{2})\2(\d{4}) (\d{2}):(\d{2}):(\d{2})$")


def parse_utc_offset(offset):
    """Return a UTC offset in seconds from ``"+05:30"``, minutes (int) or a timedelta."""
    if isinstance(offset, timedelta):
        return int(offset.total_seconds())
    if isinstance(offset, (int, np.integer)):
        return int(offset) * 60
    m = re.fullmatch(r"([+-])(\d{1,2}):?(\d{2})", str(offset).strip())
    if not m:
        raise ValueError(f"invalid UTC offset {offset!r}")
    sign = -1 if m.group(1) == "-" else 1
    return sign * (int(m.group(2)) * 3600 + int(m.group(3)) * 60)


def parse_timestamp(text, utc_offset=DEFAULT_UTC_OFFSET):
    """Parse ``dd:mm:yyyy hh:mm:ss`` (or ``dd-mm-yyyy``) local time to UTC epoch seconds."""
    m = _TS_RE.match(text.strip())
    if not m:
        raise ValueError(f"unparseable timestamp {text!r}")
    day, _, month, year, hh, mm, ss = m.groups()
    parts = tuple(int(v) for v in (year, month, day, hh, mm, ss))
    datetime(*parts)  # calendar validation
    return calendar.timegm(parts) - parse_utc_offset(utc_offset)


def format_timestamp(epoch, utc_offset=DEFAULT_UTC_OFFSET):
    tz = timezone(timedelta(seconds=parse_utc_offset(utc_offset)))
    return datetime.fromtimestamp(int(epoch), tz).strftime("%d:%m:%Y %H:%M:%S")


@dataclass(frozen=True)
class GeoSample:
    timestamp: int
    latitude: float
    longitude: float
    node_level: float
    ref_level: float | None = None


@dataclass(frozen=True)
class Reject:
    line: int
    reason: str
    text: str

    def __str__(self):
        return f"line {self.line}: {self.reason}: {self.text}"


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True).reshape(-1)
    a.setflags(write=False)
    return a


@dataclass(eq=False)
class Campaign:
    """An ordered, columnar set of 1 Hz geotagged samples.

    Levels are stored as float arrays; an absent reference level is NaN. Logs that
    only carry the reference meter have NaN node levels. The arrays are read-only;
    every operation in this package returns a new campaign.
    """

    id: str
    timestamp: np.ndarray
    latitude: np.ndarray
    longitude: np.ndarray
    node_level: np.ndarray
    ref_level: np.ndarray
    metadata: dict = field(default_factory=dict)
    rejects: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        self.timestamp = _frozen(self.timestamp, np.int64)
        n = self.timestamp.size
        for name in ("latitude", "longitude", "node_level", "ref_level"):
            arr = _frozen(getattr(self, name), np.float64)
            if arr.size != n:
                raise ValueError(f"{name} has {arr.size} entries, expected {n}")
            setattr(self, name, arr)

    @classmethod
    def from_samples(cls, id, samples, **kwargs):
        samples = list(samples)
        return cls(
            id=id,
            timestamp=[s.timestamp for s in samples],
            latitude=[s.latitude for s in samples],
            longitude=[s.longitude for s in samples],
            node_level=[s.node_level for s in samples],
            ref_level=[np.nan if s.ref_level is None else s.ref_level for s in samples],
            **kwargs,
        )

    def __len__(self):
        return int(self.timestamp.size)

    def __iter__(self):
        for i in range(len(self)):
            ref = self.ref_level[i]
            yield GeoSample(
                int(self.timestamp[i]),
                float(self.latitude[i]),
                float(self.longitude[i]),
                float(self.node_level[i]),
                None if np.isnan(ref) else float(ref),
            )

    @property
    def samples(self):
        return list(self)

    @property
    def has_node(self):
        return bool(np.isfinite(self.node_level).any())

    @property
    def paired(self):
        """Boolean mask of samples that carry both a node and a reference level."""
        return np.isfinite(self.node_level) & np.isfinite(self.ref_level)

    @property
    def duration(self):
        return int(self.timestamp[-1] - self.timestamp[0]) if len(self) else 0

    @property
    def gaps(self):
        """List of ``(timestamp_before_gap, missing_seconds)`` for holes in the 1 Hz grid."""
        d = np.diff(self.timestamp)
        idx = np.flatnonzero(d > 1)
        return [(int(self.timestamp[i]), int(d[i] - 1)) for i in idx]

    def sampling_interval_mode(self):
        d = np.diff(self.timestamp)
        if d.size == 0:
            return None
        vals, counts = np.unique(d, return_counts=True)
        return int(vals[np.argmax(counts)])

    def subset(self, mask, **changes):
        """Return a new campaign restricted to ``mask`` (boolean or index array)."""
        kw = dict(
            id=self.id,
            timestamp=self.timestamp[mask],
            latitude=self.latitude[mask],
            longitude=self.longitude[mask],
            node_level=self.node_level[mask],
            ref_level=self.ref_level[mask],
            metadata=dict(self.metadata),
            stats=dict(self.stats),
        )
        kw.update(changes)
        return Campaign(**kw)

    def replace(self, **changes):
        return self.subset(slice(None), **changes)

    def equals(self, other):
        """Field-wise equality on the retained columns (NaN equals NaN)."""
        return (
            len(self) == len(other)
            and np.array_equal(self.timestamp, other.timestamp)
            and all(
                np.array_equal(getattr(self, n), getattr(other, n), equal_nan=True)
                for n in ("latitude", "longitude", "node_level", "ref_level")
            )
        )


def _infer_format(header):
    for fmt, cols in HEADERS.items():
        if tuple(header) == cols:
            return fmt
    return None


def parse_log(path, format=None, utc_offset=DEFAULT_UTC_OFFSET, campaign_id=None,
              metadata=None, diagnostics=None, max_reject_fraction=0.5):
    """Parse a campaign CSV log.

    Parameters
    ----------
    path : path-like
        CSV file whose header names the columns of one of ``HEADERS``.
    format : {"node-csv", "ref-csv", "merged-csv"} or None
        Declared format. ``None`` infers it from the header.
    utc_offset : str, int or timedelta
        Offset of the logger's local clock from UTC.
    diagnostics : text stream or None
        Receives one line per rejected row.
    max_reject_fraction : float
        Abort when more than this fraction of rows is rejected.

    Returns
    -------
    Campaign
        Samples sorted by timestamp. Rejected rows are listed in ``rejects``;
        ``len(campaign) + len(campaign.rejects)`` equals the number of data rows.
    """
    path = Path(path)
    try:
        with open(path, encoding="utf-8-sig", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as e:
        raise LogParseError(f"cannot read {path}: {e}") from e
    if not rows:
        raise LogParseError(f"{path}: empty file")
    header = [h.strip().lower() for h in rows[0]]
    inferred = _infer_format(header)
    if format is None:
        if inferred is None:
            raise LogParseError(f"{path}: unrecognised header {','.join(header)}")
        format = inferred
    elif format not in HEADERS:
        raise ValueError(f"unknown log format {format!r}")
    elif tuple(header) != HEADERS[format]:
        raise LogParseError(
            f"{path}: header {','.join(header)} does not match {format} "
            f"({','.join(HEADERS[format])})")

    ncol = len(HEADERS[format])
    lo, hi = LEVEL_RANGE
    good, rejects = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        text = ",".join(row)
        if len(row) != ncol:
            rejects.append(Reject(lineno, "wrong field count", text))
            continue
        try:
            ts = parse_timestamp(row[0], utc_offset)
        except ValueError:
            rejects.append(Reject(lineno, "unparseable timestamp", text))
            continue
        try:
            lat, lon = float(row[1]), float(row[2])
            levels = [float(c) if c.strip() else np.nan for c in row[3:]]
        except ValueError:
            rejects.append(Reject(lineno, "unparseable number", text))
            continue
        if not -90.0 <= lat <= 90.0:
            rejects.append(Reject(lineno, "latitude out of range", text))
            continue
        if not -180.0 <= lon <= 180.0:
            rejects.append(Reject(lineno, "longitude out of range", text))
            continue
        if np.isnan(levels[0]) or any(not lo <= v <= hi for v in levels if not np.isnan(v)):
            rejects.append(Reject(lineno, "level out of sensor range", text))
            continue
        if format == "ref-csv":
            node, ref = np.nan, levels[0]
        elif format == "node-csv":
            node, ref = levels[0], np.nan
        else:
            node, ref = levels
        good.append((ts, lat, lon, node, ref, lineno, text))

    good.sort(key=lambda r: r[0])
    kept, seen = [], set()
    for r in good:
        if r[0] in seen:
            rejects.append(Reject(r[5], "duplicate timestamp", r[6]))
        else:
            seen.add(r[0])
            kept.append(r)
    rejects.sort(key=lambda r: r.line)

    total = len(kept) + len(rejects)
    if diagnostics is not None:
        for r in rejects:
            print(f"{path}: {r}", file=diagnostics)
    if total == 0 or not kept:
        raise LogParseError(f"{path}: no valid samples")
    if len(rejects) > max_reject_fraction * total:
        raise LogParseError(f"{path}: {len(rejects)} of {total} rows rejected")

    cols = list(zip(*kept))
    return Campaign(
        id=campaign_id or path.stem,
        timestamp=cols[0], latitude=cols[1], longitude=cols[2],
        node_level=cols[3], ref_level=cols[4],
        metadata=dict(metadata or {}),
        rejects=rejects,
        stats={"format": format, "rows": total, "rejected": len(rejects)},
    )


def _metadata_path(path):
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def load_campaign(path, format=None, utc_offset=DEFAULT_UTC_OFFSET, diagnostics=None):
    """``parse_log`` plus the optional ``<stem>.meta.json`` sidecar carrying metadata."""
    meta_path = _metadata_path(path)
    metadata = {}
    if meta_path.exists():
        metadata = json.loads(meta_path.read_text(encoding="utf-8"))
    return parse_log(path, format=format, utc_offset=utc_offset,
                     campaign_id=metadata.pop("id", None), metadata=metadata,
                     diagnostics=diagnostics)


def write_campaign(c, path, utc_offset=DEFAULT_UTC_OFFSET, write_metadata=True):
    """Write ``c`` in the log format matching the levels it carries.

    Coordinates are written with 4 decimals and levels with 1 decimal.
    """
    if len(c) == 0:
        raise ValueError("cannot write an empty campaign")
    path = Path(path)
    if not c.has_node:
        fmt = "ref-csv"
    elif np.isfinite(c.ref_level).any():
        fmt = "merged-csv"
    else:
        fmt = "node-csv"

    def lvl(v):
        return "" if np.isnan(v) else f"{v:.1f}"

    with atomic_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADERS[fmt])
        for i in range(len(c)):
            row = [format_timestamp(c.timestamp[i], utc_offset),
                   f"{c.latitude[i]:.4f}", f"{c.longitude[i]:.4f}"]
            if fmt == "ref-csv":
                row.append(lvl(c.ref_level[i]))
            elif fmt == "node-csv":
                row.append(lvl(c.node_level[i]))
            else:
                row += [lvl(c.node_level[i]), lvl(c.ref_level[i])]
            w.writerow(row)
    if write_metadata and c.metadata:
        with atomic_write(_metadata_path(path)) as fh:
            json.dump({"id": c.id, **c.metadata}, fh, indent=2, sort_keys=True)
            fh.write("\n")


def merge_streams(node, ref):
    """Attach reference levels to node samples logged at the identical second.

    Every node sample is kept. ``stats`` of the result records how many node and
    reference seconds found no partner.
    """
    if len(node) == 0 or len(ref) == 0:
        raise AlignmentError("cannot merge an empty campaign")
    pos = np.searchsorted(ref.timestamp, node.timestamp)
    pos_c = np.minimum(pos, len(ref) - 1)
    hit = ref.timestamp[pos_c] == node.timestamp
    if not hit.any():
        raise AlignmentError("no temporal overlap between node and reference logs")
    ref_level = np.full(len(node), np.nan)
    ref_level[hit] = ref.ref_level[pos_c[hit]]
    stats = dict(node.stats)
    stats.update(
        unmatched_node_seconds=int((~hit).sum()),
        unmatched_ref_seconds=int(len(ref) - hit.sum()),
    )
    metadata = {**ref.metadata, **node.metadata}
    return node.replace(ref_level=ref_level, stats=stats, metadata=metadata)


def print_rejects(c, stream=None):
    stream = stream or sys.stderr
    for r in c.rejects:
        print(f"{c.id}: {r}", file=stream)
