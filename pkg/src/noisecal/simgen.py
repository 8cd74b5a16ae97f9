"""Synthetic campaigns with known sensor distortion, route geometry and clock lag."""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.signal import lfilter

from .geo import haversine
from .ingest import Campaign, parse_timestamp


@dataclass(frozen=True)
class SensorErrorModel:
    """Distortion turning the true level ``L`` into a node reading.

    ``node = gain*L + bias + nonlinearity*(L - 80)**2 + wind_coupling*v + N(0, noise_sd)``,
    logged ``lag`` seconds late (positive lag: node trails the reference), with a
    fraction ``outlier_rate`` of seconds shifted by +/- ``outlier_magnitude``.
    ``wind_coupling`` (dBA per m/s of vehicle speed) models flow noise on the
    moving node.
    """

    bias: float = 0.0
    gain: float = 1.0
    nonlinearity: float = 0.0
    noise_sd: float = 0.0
    lag: int = 0
    outlier_rate: float = 0.0
    outlier_magnitude: float = 0.0
    wind_coupling: float = 0.0

    def __post_init__(self):
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be non-negative")
        if not 0.0 <= self.outlier_rate <= 0.05:
            raise ValueError("outlier_rate must lie in [0, 0.05]")

    def apply(self, level, speed=0.0):
        """Noise-free distortion of true levels."""
        level = np.asarray(level, dtype=float)
        return (self.gain * level + self.bias + self.nonlinearity * (level - 80.0) ** 2
                + self.wind_coupling * np.asarray(speed, dtype=float))


@dataclass(frozen=True)
class RouteSpec:
    """Route geometry, driving pattern and ambient noise field.

    The vehicle drives the polyline back and forth following ``speed_profile``,
    a cyclic list of ``(duration_s, speed_mps)`` pieces. The ambient level is
    the segment base level, plus a daily cosine, plus ``velocity_coupling``
    times the speed, plus an AR(1) fluctuation, plus energetically added bursts.
    """

    waypoints: tuple
    speed_profile: tuple = ((60, 7.0),)
    segment_base: tuple = (80.0,)
    tod_amplitude: float = 0.0
    tod_peak_hour: float = 9.0
    velocity_coupling: float = 0.0
    fluctuation_sd: float = 0.0
    fluctuation_tau: float = 30.0
    burst_rate: float = 0.0
    burst_magnitude: float = 0.0
    burst_duration: int = 5
    level_bounds: tuple = (30.0, 130.0)
    start_time: int = 0
    utc_offset: str = "+05:30"
    metadata: dict = field(default_factory=dict, hash=False, compare=False)

    def validate(self):
        if len(self.waypoints) < 2:
            raise ValueError("route needs at least 2 waypoints")
        if any(s < 0 for _, s in self.speed_profile) or not self.speed_profile:
            raise ValueError("speeds must be non-negative")
        if any(d <= 0 for d, _ in self.speed_profile):
            raise ValueError("speed profile pieces need positive durations")
        if len(self.segment_base) not in (1, len(self.waypoints) - 1):
            raise ValueError("segment_base needs one value or one per segment")
        for lat, lon in self.waypoints:
            if not (-90 <= lat <= 90 and -180 <= lon <= 180):
                raise ValueError("waypoint out of range")


@dataclass
class GroundTruth:
    lag: int
    error_model: SensorErrorModel
    velocity: np.ndarray
    ambient: np.ndarray
    outlier_timestamps: np.ndarray
    timestamps: np.ndarray

    def to_dict(self):
        return {
            "lag": self.lag,
            "error_model": asdict(self.error_model),
            "start": int(self.timestamps[0]),
            "velocity_mps": [round(float(v), 6) for v in self.velocity],
            "outlier_timestamps": [int(t) for t in self.outlier_timestamps],
        }

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")


def _speed_series(profile, n):
    durations = np.array([d for d, _ in profile], dtype=np.int64)
    speeds = np.array([s for _, s in profile], dtype=float)
    one_cycle = np.repeat(speeds, durations)
    reps = -(-n // one_cycle.size)
    return np.tile(one_cycle, reps)[:n]


def _positions(waypoints, distance):
    lat = np.array([w[0] for w in waypoints], dtype=float)
    lon = np.array([w[1] for w in waypoints], dtype=float)
    seg = haversine(lat[:-1], lon[:-1], lat[1:], lon[1:])
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= 0:
        z = np.zeros_like(distance, dtype=np.int64)
        return np.full(distance.shape, lat[0]), np.full(distance.shape, lon[0]), z
    u = np.mod(distance, 2 * total)
    u = np.where(u > total, 2 * total - u, u)
    k = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, seg.size - 1)
    frac = np.where(seg[k] > 0, (u - cum[k]) / np.where(seg[k] > 0, seg[k], 1.0), 0.0)
    return lat[k] + frac * (lat[k + 1] - lat[k]), lon[k] + frac * (lon[k + 1] - lon[k]), k


def generate_campaign(route, err, duration, seed=0, campaign_id="sim"):
    """Simulate co-located node and reference logs at 1 Hz.

    Returns
    -------
    node : Campaign
        Node levels only (reference column NaN).
    ref : Campaign
        Reference levels only (node column NaN).
    truth : GroundTruth
    """
    route.validate()
    duration = int(duration)
    if duration < 60:
        raise ValueError("duration must be at least 60 s")
    rng = np.random.default_rng(seed)
    pad = abs(int(err.lag))
    n_ext = duration + 2 * pad
    t_ext = route.start_time - pad + np.arange(n_ext, dtype=np.int64)

    speed = _speed_series(route.speed_profile, n_ext)
    dist = np.cumsum(speed) - speed[0]
    lat, lon, seg = _positions(route.waypoints, dist)

    base = np.asarray(route.segment_base, dtype=float)
    amb = base[seg] if base.size > 1 else np.full(n_ext, base[0])
    if route.tod_amplitude:
        from .analytics import seconds_of_day
        hours = seconds_of_day(t_ext, route.utc_offset) / 3600.0
        amb = amb + route.tod_amplitude * np.cos(2 * np.pi * (hours - route.tod_peak_hour) / 24.0)
    amb = amb + route.velocity_coupling * speed
    if route.fluctuation_sd > 0:
        phi = math.exp(-1.0 / route.fluctuation_tau)
        e = rng.normal(0.0, route.fluctuation_sd * math.sqrt(1 - phi * phi), n_ext)
        e[0] = rng.normal(0.0, route.fluctuation_sd)
        amb = amb + lfilter([1.0], [1.0, -phi], e)
    if route.burst_rate > 0:
        starts = np.flatnonzero(rng.random(n_ext) < route.burst_rate)
        burst = np.full(n_ext, -np.inf)
        for s0 in starts:
            lvl = route.burst_magnitude * rng.uniform(0.5, 1.5)
            sl = slice(s0, s0 + route.burst_duration)
            burst[sl] = np.maximum(burst[sl], amb[sl] + lvl)
        hit = np.isfinite(burst)
        amb[hit] = 10 * np.log10(10 ** (amb[hit] / 10) + 10 ** (burst[hit] / 10))
    lo, hi = max(route.level_bounds[0], 30.0), min(route.level_bounds[1], 130.0)
    amb = np.clip(amb, lo, hi)

    body = slice(pad, pad + duration)
    src = slice(pad - err.lag, pad - err.lag + duration)
    node = err.apply(amb[src], speed[src])
    if err.noise_sd > 0:
        node = node + rng.normal(0.0, err.noise_sd, duration)
    outliers = np.zeros(duration, dtype=bool)
    if err.outlier_rate > 0:
        outliers = rng.random(duration) < err.outlier_rate
        signs = rng.choice([-1.0, 1.0], size=duration)
        node = np.where(outliers, node + signs * err.outlier_magnitude, node)
    node = np.clip(node, 30.0, 130.0)

    ts = t_ext[body]
    nan = np.full(duration, np.nan)
    meta = dict(route.metadata)
    node_c = Campaign(f"{campaign_id}-node", ts, lat[body], lon[body], node, nan, meta)
    ref_c = Campaign(f"{campaign_id}-ref", ts, lat[body], lon[body], nan, amb[body], dict(meta))
    truth = GroundTruth(int(err.lag), err, speed[body].copy(), amb[body].copy(), ts[outliers], ts)
    return node_c, ref_c, truth


# --------------------------------------------------------------------------- #

_HYD_ROUTE = (
    (17.4454, 78.3489), (17.4470, 78.3541), (17.4486, 78.3592), (17.4534, 78.3624),
    (17.4581, 78.3656), (17.4640, 78.3613), (17.4699, 78.3570), (17.4774, 78.3480),
    (17.4848, 78.3390), (17.4898, 78.3357), (17.4947, 78.3324), (17.4999, 78.3398),
    (17.5050, 78.3471), (17.5091, 78.3690), (17.5133, 78.3909),
)
# quiet lanes through arterial junctions: a wide, flat spread of levels
_SEGMENT_BASE = (78.2, 108.6, 95.1, 88.3, 91.7, 68.0, 81.5, 71.4, 112.0, 101.8, 74.8,
                 84.9, 98.5, 105.2)
NODE_DISTORTION = dict(bias=35.0, gain=0.6, nonlinearity=0.025, noise_sd=2.0,
                       outlier_rate=0.003, outlier_magnitude=15.0)


def _drive_profile(seed, pieces=400):
    rng = np.random.default_rng(seed)
    durs = rng.integers(20, 121, size=pieces)
    speeds = np.round(rng.uniform(0.5, 12.0, size=pieces), 2)
    return tuple((int(d), float(s)) for d, s in zip(durs, speeds))


def default_scenarios():
    """Named ``(RouteSpec, SensorErrorModel)`` pairs: ``lab``, ``mobile`` and ``festival``.

    All three share the same node distortion; the moving scenarios add flow
    noise proportional to vehicle speed.
    """
    lab_start = parse_timestamp("15:04:2024 10:00:00")
    mobile_start = parse_timestamp("06:05:2024 08:00:00")
    festival_start = parse_timestamp("31:10:2024 18:00:00")
    drive = _drive_profile(2024)
    mobile_route = dict(
        waypoints=_HYD_ROUTE, speed_profile=drive,
        segment_base=_SEGMENT_BASE,
        tod_amplitude=1.5, tod_peak_hour=9.5, velocity_coupling=-0.5,
        fluctuation_sd=3.0, fluctuation_tau=15.0,
    )
    return {
        "lab": (
            RouteSpec(waypoints=((17.4454, 78.3489), (17.4454, 78.3489)),
                      speed_profile=((60, 0.0),), segment_base=(78.0,),
                      fluctuation_sd=5.0, fluctuation_tau=60.0, level_bounds=(50.0, 90.0),
                      start_time=lab_start, metadata={"route": "lab", "session": "day",
                                                      "day_class": "lab"}),
            SensorErrorModel(lag=3, **NODE_DISTORTION),
        ),
        "mobile": (
            RouteSpec(start_time=mobile_start,
                      metadata={"route": "route-1", "session": "morning", "day_class": "weekday"},
                      **mobile_route),
            SensorErrorModel(lag=5, wind_coupling=0.1, **NODE_DISTORTION),
        ),
        "festival": (
            RouteSpec(start_time=festival_start, burst_rate=0.01, burst_magnitude=15.0,
                      burst_duration=8,
                      metadata={"route": "route-1", "session": "evening", "day_class": "festival"},
                      **mobile_route),
            SensorErrorModel(lag=5, wind_coupling=0.1, **NODE_DISTORTION),
        ),
    }
