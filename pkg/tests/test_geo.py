"""Lambert conformal conic and local-to-global position tests."""
from __future__ import annotations

import math

import numpy as np
import pytest

from panoloc.errors import OutOfBand
from panoloc.geo import (
    WGS84_A,
    WGS84_F,
    LambertProjection,
    lambert_to_wgs84,
    local_pose_to_geo,
    wgs84_to_lambert,
)
from panoloc.geometry import GeoPoint, rotation_from_bearing
from panoloc.se3 import PoseSE3

PROJ = LambertProjection(lat1=48.0, lat2=49.5, lat0=48.801631, lon0=2.131509,
                         false_easting=10000.0, false_northing=20000.0)
E2 = WGS84_F * (2.0 - WGS84_F)


def _meridian_radius(lat_deg):
    s2 = math.sin(math.radians(lat_deg)) ** 2
    return WGS84_A * (1 - E2) / (1 - E2 * s2) ** 1.5


def _prime_vertical_radius(lat_deg):
    s2 = math.sin(math.radians(lat_deg)) ** 2
    return WGS84_A / math.sqrt(1 - E2 * s2)


def _short_geodesic(p1: GeoPoint, p2: GeoPoint) -> float:
    """Ellipsoidal distance for nearby points via local radii (test oracle)."""
    mid = 0.5 * (p1.lat + p2.lat)
    dn = math.radians(p2.lat - p1.lat) * _meridian_radius(mid)
    de = (math.radians(p2.lon - p1.lon)
          * _prime_vertical_radius(mid) * math.cos(math.radians(mid)))
    return math.hypot(de, dn)


def test_origin_maps_to_false_offsets():
    x, y = wgs84_to_lambert(GeoPoint(PROJ.lat0, PROJ.lon0), PROJ)
    assert x == pytest.approx(10000.0, abs=1e-9)
    assert y == pytest.approx(20000.0, abs=1e-9)
    p = lambert_to_wgs84((10000.0, 20000.0), PROJ)
    assert p.lat == pytest.approx(PROJ.lat0, abs=1e-9)
    assert p.lon == pytest.approx(PROJ.lon0, abs=1e-9)


@pytest.mark.parametrize("lat", [48.0, 49.5])
def test_unit_scale_on_standard_parallels(lat):
    # scale along the parallel from numeric differentiation of the forward map
    dlon = 1e-6
    x1, y1 = wgs84_to_lambert(GeoPoint(lat, 2.0), PROJ)
    x2, y2 = wgs84_to_lambert(GeoPoint(lat, 2.0 + dlon), PROJ)
    plane = math.hypot(x2 - x1, y2 - y1)
    arc = (math.radians(dlon) * _prime_vertical_radius(lat)
           * math.cos(math.radians(lat)))
    assert plane / arc == pytest.approx(1.0, abs=1e-7)


def test_paper_area_coordinate_round_trip():
    p = GeoPoint(48.801631, 2.131509)
    back = lambert_to_wgs84(wgs84_to_lambert(p, PROJ), PROJ)
    assert back.lat == pytest.approx(p.lat, abs=1e-9)
    assert back.lon == pytest.approx(p.lon, abs=1e-9)


def test_round_trips_over_band():
    rng = np.random.default_rng(42)
    lats = rng.uniform(47.0, 50.5, size=500)
    lons = rng.uniform(0.0, 4.5, size=500)
    for lat, lon in zip(lats, lons):
        p = GeoPoint(lat, lon)
        xy = wgs84_to_lambert(p, PROJ)
        back = lambert_to_wgs84(xy, PROJ)
        assert abs(back.lat - lat) < 1e-9 and abs(back.lon - lon) < 1e-9
        x2, y2 = wgs84_to_lambert(back, PROJ)
        assert math.hypot(x2 - xy[0], y2 - xy[1]) < 1e-6


def test_plane_distance_matches_geodesic_for_short_baselines():
    rng = np.random.default_rng(9)
    for _ in range(100):
        lat = rng.uniform(48.1, 49.4)
        lon = rng.uniform(1.8, 2.5)
        d_east = rng.uniform(-500, 500)
        d_north = rng.uniform(-500, 500)
        p1 = GeoPoint(lat, lon)
        p2 = GeoPoint(lat + math.degrees(d_north / _meridian_radius(lat)),
                      lon + math.degrees(d_east / (_prime_vertical_radius(lat)
                                                   * math.cos(math.radians(lat)))))
        x1, y1 = wgs84_to_lambert(p1, PROJ)
        x2, y2 = wgs84_to_lambert(p2, PROJ)
        plane = math.hypot(x2 - x1, y2 - y1)
        geod = _short_geodesic(p1, p2)
        assert plane == pytest.approx(geod, rel=1e-3)


def test_out_of_band_latitude_raises():
    with pytest.raises(OutOfBand):
        wgs84_to_lambert(GeoPoint(89.9, 0.0), PROJ)


def test_identity_pose_returns_reference_geotag():
    ref = GeoPoint(48.8, 2.13, 31.0)
    rot = rotation_from_bearing(0.4)
    out = local_pose_to_geo(PoseSE3.identity(), ref, rot, PROJ)
    assert out.lat == pytest.approx(ref.lat, abs=1e-10)
    assert out.lon == pytest.approx(ref.lon, abs=1e-10)
    assert out.alt == pytest.approx(ref.alt)


def test_rotation_only_pose_returns_reference_geotag():
    ref = GeoPoint(48.8, 2.13, 31.0)
    pose = PoseSE3(rotation_from_bearing(1.2), np.zeros(3))
    out = local_pose_to_geo(pose, ref, rotation_from_bearing(0.4), PROJ)
    assert out.lat == pytest.approx(ref.lat, abs=1e-10)
    assert out.lon == pytest.approx(ref.lon, abs=1e-10)


def test_ten_meters_north_offset():
    ref = GeoPoint(48.801631, 2.131509, 0.0)
    rot = rotation_from_bearing(0.0)  # reference camera faces north
    # vehicle 10 m ahead of the reference camera, i.e. 10 m north
    rel = PoseSE3(np.eye(3), np.array([0.0, 0.0, -10.0]))
    assert np.allclose(rel.center(), [0, 0, 10])
    out = local_pose_to_geo(rel, ref, rot, PROJ)
    expected_dlat = math.degrees(10.0 / _meridian_radius(ref.lat))
    assert (out.lat - ref.lat) == pytest.approx(expected_dlat, rel=1e-3)
    assert out.lon == pytest.approx(ref.lon, abs=1e-9)
