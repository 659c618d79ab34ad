"""WGS84 <-> Lambert conformal conic plane, and local pose to geo position.

Two-standard-parallel conic on a configurable ellipsoid.  Near the zone's
central meridian, grid east/north coincide with true east/north to within
the meridian convergence, which is negligible over the sub-kilometer
working areas this package targets; the vehicle's east-north-up offset is
therefore added directly to the reference point's plane coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonConvergence, OutOfBand
from .geometry import GeoPoint
from .se3 import PoseSE3

WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563

MAX_LAT_DEG = 89.5   # conic blows up toward the poles


@dataclass(frozen=True)
class LambertProjection:
    """Two-parallel Lambert conformal conic zone."""

    lat1: float                 # standard parallels, degrees
    lat2: float
    lat0: float                 # grid origin, degrees
    lon0: float
    false_easting: float = 0.0
    false_northing: float = 0.0
    a: float = WGS84_A
    f: float = WGS84_F

    def __post_init__(self):
        if abs(self.lat1 + self.lat2) < 1e-12 and abs(self.lat1) > 1e-12:
            raise ValueError("standard parallels must not be opposite (degenerate cone)")
        if self.a <= 0 or not 0.0 < self.f < 1.0:
            raise ValueError("invalid ellipsoid")

    @property
    def e(self) -> float:
        return float(np.sqrt(self.f * (2.0 - self.f)))


def _m(phi: float, e: float) -> float:
    return np.cos(phi) / np.sqrt(1.0 - (e * np.sin(phi)) ** 2)


def _t(phi: float, e: float) -> float:
    es = e * np.sin(phi)
    return np.tan(np.pi / 4.0 - phi / 2.0) / ((1.0 - es) / (1.0 + es)) ** (e / 2.0)


def _cone_constants(proj: LambertProjection):
    e = proj.e
    p1, p2, p0 = np.radians([proj.lat1, proj.lat2, proj.lat0])
    m1, m2 = _m(p1, e), _m(p2, e)
    t1, t2, t0 = _t(p1, e), _t(p2, e), _t(p0, e)
    if abs(proj.lat1 - proj.lat2) < 1e-12:
        n = np.sin(p1)
    else:
        n = (np.log(m1) - np.log(m2)) / (np.log(t1) - np.log(t2))
    F = m1 / (n * t1 ** n)
    rho0 = proj.a * F * t0 ** n
    return e, n, F, rho0


def wgs84_to_lambert(p: GeoPoint, proj: LambertProjection) -> tuple[float, float]:
    """Forward map to plane meters (east, north)."""
    if abs(p.lat) > MAX_LAT_DEG:
        raise OutOfBand(f"latitude {p.lat} outside projection band")
    e, n, F, rho0 = _cone_constants(proj)
    phi = np.radians(p.lat)
    dlon = np.radians(p.lon - proj.lon0)
    rho = proj.a * F * _t(phi, e) ** n
    theta = n * dlon
    x = proj.false_easting + rho * np.sin(theta)
    y = proj.false_northing + rho0 - rho * np.cos(theta)
    return float(x), float(y)


def lambert_to_wgs84(xy: tuple[float, float], proj: LambertProjection,
                     max_iter: int = 20) -> GeoPoint:
    """Inverse map; latitude recovered iteratively to 1e-12 rad."""
    e, n, F, rho0 = _cone_constants(proj)
    dx = xy[0] - proj.false_easting
    dy = rho0 - (xy[1] - proj.false_northing)
    rho = np.sign(n) * np.hypot(dx, dy)
    theta = np.arctan2(np.sign(n) * dx, np.sign(n) * dy)
    t = (rho / (proj.a * F)) ** (1.0 / n)
    lon = np.degrees(theta / n) + proj.lon0

    phi = np.pi / 2.0 - 2.0 * np.arctan(t)
    for _ in range(max_iter):
        es = e * np.sin(phi)
        phi_next = np.pi / 2.0 - 2.0 * np.arctan(t * ((1.0 - es) / (1.0 + es)) ** (e / 2.0))
        if abs(phi_next - phi) < 1e-12:
            phi = phi_next
            break
        phi = phi_next
    else:
        raise NonConvergence("inverse latitude iteration did not converge")
    return GeoPoint(lat=float(np.degrees(phi)), lon=float(lon), alt=0.0)


def local_pose_to_geo(vehicle_pose: PoseSE3, ref_geotag: GeoPoint,
                      ref_rotation: np.ndarray,
                      proj: LambertProjection) -> GeoPoint:
    """Global position of a camera posed relative to a reference view.

    ``vehicle_pose`` maps reference-camera points into the vehicle camera
    frame; ``ref_rotation`` is the reference view's world-from-camera
    rotation (east-north-up).  The vehicle's camera center is rotated into
    the plane frame, added to the reference's plane coordinates, and
    inverse-projected.
    """
    center_ref = vehicle_pose.center()            # in reference-camera frame
    offset_enu = ref_rotation @ center_ref
    x0, y0 = wgs84_to_lambert(ref_geotag, proj)
    geo = lambert_to_wgs84((x0 + offset_enu[0], y0 + offset_enu[1]), proj)
    return GeoPoint(lat=geo.lat, lon=geo.lon, alt=ref_geotag.alt + float(offset_enu[2]))
