"""Track ingestion, synthetic track generation, windowing and the distance metric.

Track files are plain CSV with the exact header
``storm_id,timestamp,lat,lon,wind,pressure`` and ISO-8601 timestamps; rows
for one storm must be contiguous-in-file or at least grouped by id, with
strictly increasing timestamps.

Windowing extracts, per step, the feature block
``(lat/100, lon/200, dlat, dlon, wind/100, (pressure-1000)/100)`` where
dlat/dlon are the step-to-step position deltas in raw degrees (zero on the
first step of each window).  Labels are future position deltas in degrees,
each horizon step relative to the last observed position, ordered
``(dlat_1, dlon_1, dlat_2, dlon_2, ...)``.  The normalisation constants are
fixed here so runs are comparable across machines.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np

log = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0

CSV_HEADER = "storm_id,timestamp,lat,lon,wind,pressure"

FEATURES_PER_STEP = 6
LAT_SCALE = 100.0
LON_SCALE = 200.0
WIND_SCALE = 100.0
PRESSURE_CENTER = 1000.0
PRESSURE_SCALE = 100.0

# Synthetic-generator design constants (western-Pacific box, 6-hourly steps).
SYNTH_LAT_RANGE = (5.0, 45.0)
SYNTH_LON_RANGE = (105.0, 160.0)
SYNTH_STEP_HOURS = 6
SYNTH_MAX_STEP_KM = 500.0  # upper bound on 6-hour motion, verified by tests
SYNTH_POSITION_NOISE = 0.05  # degrees, observation noise on recorded points


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True)
class TrackPoint:
    timestamp: datetime
    lat: float
    lon: float
    wind: float      # m/s
    pressure: float  # hPa

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")
        if self.wind < 0.0:
            raise ValueError(f"wind speed {self.wind} must be >= 0")
        if self.pressure <= 0.0:
            raise ValueError(f"pressure {self.pressure} must be > 0")


@dataclass
class Track:
    storm_id: str
    points: list[TrackPoint]

    def __post_init__(self):
        for prev, cur in zip(self.points, self.points[1:]):
            if cur.timestamp <= prev.timestamp:
                raise ValueError(
                    f"track {self.storm_id}: timestamps must be strictly increasing "
                    f"({prev.timestamp} then {cur.timestamp})"
                )

    @property
    def start_year(self) -> int:
        return self.points[0].timestamp.year


@dataclass
class ForecastSample:
    features: np.ndarray  # (window * FEATURES_PER_STEP,)
    label: np.ndarray     # (2 * horizon,) future position deltas, degrees


def lon_gap(delta_deg: float) -> float:
    """Absolute longitude gap folded into [0, 180].

    Equivalent, under the even cosine, to wrapping the signed difference to
    (-180, 180]; folding the absolute value keeps the metric exactly
    symmetric in its arguments and loses no precision for tiny gaps.
    """
    gap = abs(delta_deg) % 360.0
    return 360.0 - gap if gap > 180.0 else gap


def great_circle(p1: GeoPoint, p2: GeoPoint, radius_km: float = EARTH_RADIUS_KM) -> float:
    """Great-circle distance in km via the spherical law of cosines.

    The arccos argument is clamped to [-1, 1] so rounding overshoot near
    coincident or antipodal points cannot produce NaN.
    """
    if radius_km <= 0.0:
        raise ValueError(f"radius must be positive, got {radius_km}")
    phi1 = math.radians(p1.lat)
    phi2 = math.radians(p2.lat)
    dlam = math.radians(lon_gap(p2.lon - p1.lon))
    arg = math.sin(phi1) * math.sin(phi2) + math.cos(phi1) * math.cos(phi2) * math.cos(dlam)
    return radius_km * math.acos(min(1.0, max(-1.0, arg)))


def great_circle_arrays(
    lat1: np.ndarray, lon1: np.ndarray, lat2: np.ndarray, lon2: np.ndarray,
    radius_km: float = EARTH_RADIUS_KM,
) -> np.ndarray:
    """Vectorised form of great_circle over degree arrays."""
    phi1 = np.radians(np.asarray(lat1, dtype=np.float64))
    phi2 = np.radians(np.asarray(lat2, dtype=np.float64))
    gap = np.abs(np.asarray(lon2, dtype=np.float64) - np.asarray(lon1, dtype=np.float64)) % 360.0
    gap = np.where(gap > 180.0, 360.0 - gap, gap)
    arg = np.sin(phi1) * np.sin(phi2) + np.cos(phi1) * np.cos(phi2) * np.cos(np.radians(gap))
    return radius_km * np.arccos(np.clip(arg, -1.0, 1.0))


def _parse_row(row: list[str], line_no: int) -> tuple[str, TrackPoint]:
    if len(row) != 6:
        raise ValueError(f"line {line_no}: expected 6 fields, got {len(row)}")
    storm_id = row[0].strip()
    if not storm_id:
        raise ValueError(f"line {line_no}: empty storm_id")
    try:
        stamp = datetime.fromisoformat(row[1].strip())
        lat, lon, wind, pressure = (float(v) for v in row[2:])
    except ValueError as exc:
        raise ValueError(f"line {line_no}: {exc}") from exc
    try:
        point = TrackPoint(stamp, lat, lon, wind, pressure)
    except ValueError as exc:
        raise ValueError(f"line {line_no}: {exc}") from exc
    return storm_id, point


def load_tracks(path) -> list[Track]:
    """Parse a track CSV into one Track per storm, in order of first appearance."""
    with open(path, "r", encoding="ascii", newline="") as fh:
        first = fh.readline()
        if first.strip() == "":
            return []
        if first.rstrip("\r\n") != CSV_HEADER:
            raise ValueError(f"line 1: header must be exactly {CSV_HEADER!r}, got {first.rstrip()!r}")
        by_storm: dict[str, list[TrackPoint]] = {}
        for line_no, row in enumerate(csv.reader(fh), start=2):
            if not row:
                continue
            storm_id, point = _parse_row(row, line_no)
            by_storm.setdefault(storm_id, []).append(point)
    return [Track(storm_id, points) for storm_id, points in by_storm.items()]


def save_tracks(tracks: list[Track], path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        for track in tracks:
            for p in track.points:
                fh.write(
                    f"{track.storm_id},{p.timestamp.isoformat()},"
                    f"{float(p.lat)!r},{float(p.lon)!r},{float(p.wind)!r},{float(p.pressure)!r}\n"
                )


def synth_tracks(seed: int, count: int, steps: int = 24) -> list[Track]:
    """Generate smooth recurving storm paths with seeded observation noise.

    Each track starts in the low-latitude part of the box heading
    west-northwest, then gradually recurves poleward and eastward; positions
    carry small per-step observation noise so the forecasting task has an
    irreducible error floor.  Deterministic for a fixed seed.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if steps < 2:
        raise ValueError(f"steps must be >= 2, got {steps}")
    rng = np.random.default_rng(seed)
    lat_lo, lat_hi = SYNTH_LAT_RANGE
    lon_lo, lon_hi = SYNTH_LON_RANGE
    tracks = []
    for i in range(count):
        year = int(rng.integers(2000, 2019))
        month = int(rng.integers(6, 11))
        day = int(rng.integers(1, 29))
        stamp = datetime(year, month, day)

        lat = float(rng.uniform(8.0, 18.0))
        lon = float(rng.uniform(128.0, 155.0))
        vlat = float(rng.uniform(0.05, 0.20))
        vlon = float(rng.uniform(-0.45, -0.20))
        curve_lon = float(rng.uniform(0.010, 0.030))
        curve_lat = float(rng.uniform(0.004, 0.012))
        wind_base = float(rng.uniform(20.0, 45.0))

        points = []
        for t in range(steps):
            obs_lat = lat + float(rng.normal(0.0, SYNTH_POSITION_NOISE))
            obs_lon = lon + float(rng.normal(0.0, SYNTH_POSITION_NOISE))
            obs_lat = min(max(obs_lat, lat_lo), lat_hi)
            obs_lon = min(max(obs_lon, lon_lo), lon_hi)
            wind = wind_base * (0.6 + 0.4 * math.sin(math.pi * t / steps)) + float(rng.normal(0.0, 1.0))
            wind = max(wind, 0.0)
            pressure = 1008.0 - 1.1 * wind + float(rng.normal(0.0, 0.5))
            points.append(TrackPoint(stamp + timedelta(hours=SYNTH_STEP_HOURS * t),
                                     obs_lat, obs_lon, wind, pressure))

            vlat += curve_lat + float(rng.normal(0.0, 0.02))
            vlon += curve_lon + float(rng.normal(0.0, 0.02))
            # cap the 6-hour displacement well under the physical bound
            vlat = min(max(vlat, -1.5), 1.5)
            vlon = min(max(vlon, -1.5), 1.5)
            lat = min(max(lat + vlat, lat_lo), lat_hi)
            lon = min(max(lon + vlon, lon_lo), lon_hi)
        tracks.append(Track(f"SYN{i:04d}", points))
    return tracks


def step_features(point: TrackPoint, prev: TrackPoint | None) -> list[float]:
    dlat = point.lat - prev.lat if prev is not None else 0.0
    dlon = point.lon - prev.lon if prev is not None else 0.0
    return [
        point.lat / LAT_SCALE,
        point.lon / LON_SCALE,
        dlat,
        dlon,
        point.wind / WIND_SCALE,
        (point.pressure - PRESSURE_CENTER) / PRESSURE_SCALE,
    ]


def make_windows(track: Track, window: int, horizon: int) -> list[ForecastSample]:
    """Sliding stride-1 windows; tracks shorter than window+horizon yield none."""
    if window < 1 or horizon < 1:
        raise ValueError("window and horizon must be >= 1")
    pts = track.points
    samples = []
    for start in range(len(pts) - window - horizon + 1):
        feats: list[float] = []
        for off in range(window):
            prev = pts[start + off - 1] if off > 0 else None
            feats.extend(step_features(pts[start + off], prev))
        anchor = pts[start + window - 1]
        label: list[float] = []
        for h in range(1, horizon + 1):
            future = pts[start + window - 1 + h]
            label.append(future.lat - anchor.lat)
            label.append(future.lon - anchor.lon)
        samples.append(ForecastSample(np.array(feats), np.array(label)))
    return samples


def anchor_position(sample: ForecastSample, window: int) -> tuple[float, float]:
    """De-normalise the last observed (lat, lon) out of the feature vector."""
    base = (window - 1) * FEATURES_PER_STEP
    return sample.features[base] * LAT_SCALE, sample.features[base + 1] * LON_SCALE


def split_by_year(
    tracks: list[Track],
    train_range: tuple[int, int],
    test_range: tuple[int, int],
) -> tuple[list[Track], list[Track]]:
    """Assign storms by start year; storms outside both ranges are dropped.

    Ranges are inclusive (first_year, last_year) and must not overlap.
    """
    t0, t1 = train_range
    s0, s1 = test_range
    if t0 > t1 or s0 > s1:
        raise ValueError("year ranges must be (first, last) with first <= last")
    if max(t0, s0) <= min(t1, s1):
        raise ValueError(f"train range {train_range} overlaps test range {test_range}")
    train, test = [], []
    dropped = 0
    for track in tracks:
        year = track.start_year
        if t0 <= year <= t1:
            train.append(track)
        elif s0 <= year <= s1:
            test.append(track)
        else:
            dropped += 1
    if dropped:
        log.warning("dropped %d storm(s) outside both year ranges", dropped)
    return train, test
