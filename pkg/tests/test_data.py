"""Data tests: metric identities, CSV parsing, synthesis, windowing, splits."""

import logging
import math
from datetime import datetime, timedelta

import numpy as np
import pytest

from qtrain.data import (
    CSV_HEADER,
    EARTH_RADIUS_KM,
    FEATURES_PER_STEP,
    LAT_SCALE,
    LON_SCALE,
    GeoPoint,
    Track,
    TrackPoint,
    anchor_position,
    great_circle,
    great_circle_arrays,
    load_tracks,
    make_windows,
    save_tracks,
    split_by_year,
    synth_tracks,
)

from oracles import haversine_km


def random_point(rng) -> GeoPoint:
    return GeoPoint(float(rng.uniform(-90, 90)), float(rng.uniform(-180, 180)))


# -- great-circle metric ----------------------------------------------------------

def test_distance_of_identical_points_is_zero():
    p = GeoPoint(23.4, 121.5)
    assert great_circle(p, p) == 0.0


def test_antipodal_distance_is_half_circumference():
    d = great_circle(GeoPoint(0.0, 0.0), GeoPoint(0.0, 180.0))
    assert abs(d - math.pi * EARTH_RADIUS_KM) < 1e-9


def test_quarter_circumference_and_haversine_agreement():
    d = great_circle(GeoPoint(0.0, 0.0), GeoPoint(0.0, 90.0))
    assert abs(d - math.pi * EARTH_RADIUS_KM / 2) < 1e-9
    assert abs(d - haversine_km(0, 0, 0, 90)) < 1e-6


def test_symmetry_is_exact():
    rng = np.random.default_rng(0)
    for _ in range(200):
        a, b = random_point(rng), random_point(rng)
        assert great_circle(a, b) == great_circle(b, a)


def test_agrees_with_haversine_oracle():
    rng = np.random.default_rng(1)
    for _ in range(2000):
        a, b = random_point(rng), random_point(rng)
        d = great_circle(a, b)
        h = haversine_km(a.lat, a.lon, b.lat, b.lon)
        tol = 1e-3 if d > math.pi * EARTH_RADIUS_KM - 50.0 else 1e-6
        assert abs(d - h) < tol


def test_triangle_inequality():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        a, b, c = (random_point(rng) for _ in range(3))
        assert great_circle(a, c) <= great_circle(a, b) + great_circle(b, c) + 1e-6


def test_longitude_wrap_across_dateline():
    d = great_circle(GeoPoint(0.0, 179.5), GeoPoint(0.0, -179.5))
    assert abs(d - haversine_km(0, 0, 0, 1.0)) < 1e-6


def test_vectorised_distances_match_scalar():
    rng = np.random.default_rng(3)
    pts = [(random_point(rng), random_point(rng)) for _ in range(50)]
    lat1 = np.array([a.lat for a, _ in pts])
    lon1 = np.array([a.lon for a, _ in pts])
    lat2 = np.array([b.lat for _, b in pts])
    lon2 = np.array([b.lon for _, b in pts])
    batch = great_circle_arrays(lat1, lon1, lat2, lon2)
    for i, (a, b) in enumerate(pts):
        assert abs(batch[i] - great_circle(a, b)) < 1e-9


def test_rejects_nonpositive_radius_and_bad_points():
    with pytest.raises(ValueError):
        great_circle(GeoPoint(0, 0), GeoPoint(0, 1), radius_km=0.0)
    with pytest.raises(ValueError):
        GeoPoint(95.0, 0.0)
    with pytest.raises(ValueError):
        GeoPoint(0.0, 200.0)


# -- CSV loading -------------------------------------------------------------------

FIXTURE = """storm_id,timestamp,lat,lon,wind,pressure
A1,2014-07-01T00:00:00,12.0,140.0,20.0,995.0
A1,2014-07-01T06:00:00,12.5,139.5,22.0,992.0
A1,2014-07-01T12:00:00,13.1,139.0,25.0,990.0
B2,2015-08-10T00:00:00,15.0,135.0,30.0,980.0
B2,2015-08-10T06:00:00,15.4,134.5,31.0,979.0
"""


def test_empty_file_gives_empty_list(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    assert load_tracks(path) == []


def test_two_storm_fixture(tmp_path):
    path = tmp_path / "tracks.csv"
    path.write_text(FIXTURE)
    tracks = load_tracks(path)
    assert [t.storm_id for t in tracks] == ["A1", "B2"]
    assert [len(t.points) for t in tracks] == [3, 2]
    assert tracks[0].points[1].lat == 12.5


def test_out_of_range_latitude_reports_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(CSV_HEADER + "\nA1,2014-07-01T00:00:00,95.0,140.0,20.0,995.0\n")
    with pytest.raises(ValueError, match=r"line 2.*latitude"):
        load_tracks(path)


def test_malformed_row_reports_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(CSV_HEADER + "\nA1,2014-07-01T00:00:00,12.0,140.0,20.0,995.0\nA1,notadate,1,2,3\n")
    with pytest.raises(ValueError, match="line 3"):
        load_tracks(path)


def test_wrong_header_is_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,time,lat,lon,wind,pressure\n")
    with pytest.raises(ValueError, match="header"):
        load_tracks(path)


def test_nonincreasing_timestamps_are_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(
        CSV_HEADER
        + "\nA1,2014-07-01T06:00:00,12.0,140.0,20.0,995.0"
        + "\nA1,2014-07-01T00:00:00,12.5,139.5,22.0,992.0\n"
    )
    with pytest.raises(ValueError, match="strictly increasing"):
        load_tracks(path)


def test_save_load_round_trip(tmp_path):
    tracks = synth_tracks(9, 3, 6)
    path = tmp_path / "out.csv"
    save_tracks(tracks, path)
    loaded = load_tracks(path)
    assert [t.storm_id for t in loaded] == [t.storm_id for t in tracks]
    for a, b in zip(loaded, tracks):
        for pa, pb in zip(a.points, b.points):
            assert pa == pb


# -- synthetic tracks -----------------------------------------------------------------

def test_synthesis_is_deterministic():
    a = synth_tracks(4, 5, 12)
    b = synth_tracks(4, 5, 12)
    for ta, tb in zip(a, b):
        assert ta.storm_id == tb.storm_id
        assert ta.points == tb.points


def test_synthetic_points_respect_invariants():
    for track in synth_tracks(6, 20, 24):
        assert len(track.points) == 24
        for p in track.points:
            assert 5.0 <= p.lat <= 45.0
            assert 105.0 <= p.lon <= 160.0
            assert p.wind >= 0.0
            assert p.pressure > 0.0
        deltas = [
            (b.timestamp - a.timestamp) for a, b in zip(track.points, track.points[1:])
        ]
        assert all(d == timedelta(hours=6) for d in deltas)


def test_six_hour_motion_stays_physical():
    for track in synth_tracks(8, 30, 30):
        for a, b in zip(track.points, track.points[1:]):
            step = great_circle(GeoPoint(a.lat, a.lon), GeoPoint(b.lat, b.lon))
            assert step < 500.0


def test_synthesis_validates_arguments():
    with pytest.raises(ValueError):
        synth_tracks(0, 0, 10)
    with pytest.raises(ValueError):
        synth_tracks(0, 1, 1)


# -- windowing ---------------------------------------------------------------------------

def _track_from_rows(rows):
    t0 = datetime(2010, 7, 1)
    return Track("T", [
        TrackPoint(t0 + timedelta(hours=6 * i), *row) for i, row in enumerate(rows)
    ])


def test_minimum_length_track_yields_one_sample():
    track = _track_from_rows([(10.0, 140.0, 20.0, 990.0)] * 2 + [(11.0, 139.0, 20.0, 990.0)])
    assert len(make_windows(track, window=2, horizon=1)) == 1


def test_window_count_follows_stride_arithmetic():
    rows = [(10.0 + 0.1 * i, 140.0 - 0.1 * i, 20.0, 990.0) for i in range(2 + 1 + 2)]
    assert len(make_windows(_track_from_rows(rows), window=2, horizon=1)) == 3


def test_short_track_yields_no_samples():
    track = _track_from_rows([(10.0, 140.0, 20.0, 990.0)] * 2)
    assert make_windows(track, window=2, horizon=1) == []


def test_features_match_hand_computation():
    track = _track_from_rows([
        (10.0, 140.0, 20.0, 990.0),
        (10.5, 139.2, 22.0, 988.0),
        (11.2, 138.5, 25.0, 985.0),
    ])
    [sample] = make_windows(track, window=2, horizon=1)
    expected_features = [
        10.0 / 100, 140.0 / 200, 0.0, 0.0, 20.0 / 100, (990.0 - 1000.0) / 100,
        10.5 / 100, 139.2 / 200, 0.5, -0.8, 22.0 / 100, (988.0 - 1000.0) / 100,
    ]
    np.testing.assert_allclose(sample.features, expected_features, atol=1e-12)
    np.testing.assert_allclose(sample.label, [11.2 - 10.5, 138.5 - 139.2], atol=1e-12)


def test_denormalising_features_recovers_coordinates():
    track = synth_tracks(12, 1, 10)[0]
    for start, sample in enumerate(make_windows(track, window=3, horizon=1)):
        for off in range(3):
            base = off * FEATURES_PER_STEP
            point = track.points[start + off]
            assert abs(sample.features[base] * LAT_SCALE - point.lat) < 1e-9
            assert abs(sample.features[base + 1] * LON_SCALE - point.lon) < 1e-9
        lat, lon = anchor_position(sample, window=3)
        assert abs(lat - track.points[start + 2].lat) < 1e-9
        assert abs(lon - track.points[start + 2].lon) < 1e-9


def test_multi_step_labels_are_relative_to_the_anchor():
    rows = [(10.0 + i, 140.0 - i, 20.0, 990.0) for i in range(5)]
    [sample] = make_windows(_track_from_rows(rows), window=2, horizon=3)
    np.testing.assert_allclose(sample.label, [1.0, -1.0, 2.0, -2.0, 3.0, -3.0], atol=1e-12)


# -- splitting ----------------------------------------------------------------------------

def _storm(year, storm_id="S"):
    return Track(storm_id, [
        TrackPoint(datetime(year, 7, 1), 10.0, 140.0, 20.0, 990.0),
        TrackPoint(datetime(year, 7, 1, 6), 10.5, 139.5, 20.0, 990.0),
    ])


def test_fixture_splits_one_and_one():
    train, test = split_by_year([_storm(2014, "A"), _storm(2015, "B")], (2000, 2014), (2015, 2018))
    assert [t.storm_id for t in train] == ["A"]
    assert [t.storm_id for t in test] == ["B"]


def test_all_storms_in_train_range():
    train, test = split_by_year([_storm(2005), _storm(2010)], (2000, 2014), (2015, 2018))
    assert len(train) == 2 and test == []


def test_out_of_range_storm_is_dropped_with_warning(caplog):
    with caplog.at_level(logging.WARNING, logger="qtrain.data"):
        train, test = split_by_year(
            [_storm(1999, "X"), _storm(2001, "Y")], (2000, 2014), (2015, 2018)
        )
    assert len(train) == 1 and test == []
    assert "dropped 1 storm" in caplog.text


def test_overlapping_ranges_are_rejected():
    with pytest.raises(ValueError, match="overlap"):
        split_by_year([], (2000, 2015), (2015, 2018))
