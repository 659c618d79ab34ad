"""Panorama model, rectilinear synthesis, and plane-encoded depth.

Frame conventions (global for the whole package):

* Camera frame: x right, y down, z forward (z is the optical axis).
* Panorama / world frame: x east, y north, z up.  A panorama's local frame
  is the east-north-up frame centered at its optical center.
* ``heading`` is the compass bearing of the panorama's center column,
  radians in [0, 2*pi), measured clockwise from true north.
* Equirectangular registration: continuous column coordinate ``x`` in
  [0, W) maps to bearing ``heading + 2*pi*x/W - pi`` (so x = W/2 looks
  along the heading, column 0 looks away from it); continuous row ``y``
  in [0, H] maps to polar angle ``phi = pi*y/H`` measured from zenith.
  Texel (u, v) is centered at (u + 0.5, v + 0.5).  Sampling wraps in
  longitude and clamps in latitude.
* Depth is distance along the ray in meters, not z-depth; 0 means unknown.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GrazingRay, UnknownDepth, ZeroVector

GRAZING_EPS = 1e-6


@dataclass(frozen=True)
class GeoPoint:
    """WGS84 position, latitude/longitude in degrees, altitude in meters."""

    lat: float
    lon: float
    alt: float = 0.0

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon < 180.0:
            raise ValueError(f"longitude {self.lon} outside [-180, 180)")


@dataclass(frozen=True)
class PinholeCamera:
    """Pinhole intrinsics; all quantities in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @classmethod
    def from_fov(cls, width: int, height: int, fov_x_deg: float) -> "PinholeCamera":
        """Square-pixel camera with the given horizontal field of view."""
        fx = 0.5 * width / np.tan(0.5 * np.radians(fov_x_deg))
        return cls(fx=fx, fy=fx, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
                   width=width, height=height)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class PanoramaImage:
    """Equirectangular RGB panorama with its geotag and heading."""

    pixels: np.ndarray          # (H, W, 3) uint8, W == 2*H
    geotag: GeoPoint
    heading: float              # radians in [0, 2*pi)

    def __post_init__(self):
        h, w = self.pixels.shape[:2]
        if w != 2 * h:
            raise ValueError(f"panorama must be 2:1, got {w}x{h}")
        if not 0.0 <= self.heading < 2.0 * np.pi:
            raise ValueError("heading must lie in [0, 2*pi)")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class PlanarDepthMap:
    """Scene depth encoded as per-pixel plane indices plus a plane table.

    ``plane_index`` holds small integers, 0 meaning "no plane".  Each plane
    is (n, d) with n a unit normal in the panorama frame pointing toward
    the camera and d > 0 meters, so scene points X satisfy n . X + d = 0.
    The grid shares the panorama's equirectangular registration (including
    heading) at its own, typically lower, resolution.
    """

    plane_index: np.ndarray                 # (h, w) int
    planes: tuple                           # ((nx, ny, nz, d), ...)
    heading: float = 0.0

    def __post_init__(self):
        idx = np.asarray(self.plane_index)
        if idx.size and idx.max() > len(self.planes):
            raise ValueError("plane index exceeds plane table length")
        for i, (nx, ny, nz, d) in enumerate(self.planes):
            norm = np.sqrt(nx * nx + ny * ny + nz * nz)
            if abs(norm - 1.0) > 1e-9:
                raise ValueError(f"plane {i} normal is not unit length")
            if d <= 0:
                raise ValueError(f"plane {i} distance must be positive")

    @property
    def width(self) -> int:
        return self.plane_index.shape[1]

    @property
    def height(self) -> int:
        return self.plane_index.shape[0]


@dataclass(frozen=True)
class VirtualRig:
    """Virtual pinhole cameras sharing one center, one per yaw slot."""

    camera: PinholeCamera
    pitch: float = 0.0
    yaws: tuple = field(default_factory=lambda: tuple(np.deg2rad(np.arange(8) * 45.0)))

    def __post_init__(self):
        y = np.asarray(self.yaws)
        if np.any(y < 0) or np.any(y >= 2 * np.pi) or np.any(np.diff(y) <= 0):
            raise ValueError("yaws must be strictly increasing within [0, 2*pi)")


@dataclass(frozen=True)
class RectilinearView:
    """Perspective cutout of a panorama plus its per-pixel depth and pose."""

    image: np.ndarray           # (H, W) or (H, W, 3) uint8
    depth: np.ndarray           # (H, W) float32 meters, 0 = unknown
    camera: PinholeCamera
    rotation: np.ndarray        # 3x3 world-from-camera
    panorama_id: int
    yaw_slot: int
    geotag: GeoPoint

    def __post_init__(self):
        if self.image.shape[:2] != self.depth.shape[:2]:
            raise ValueError("image and depth dimensions differ")
        if np.any(self.depth < 0):
            raise ValueError("depth values must be >= 0")


# ---------------------------------------------------------------------------
# Spherical model
# ---------------------------------------------------------------------------

def spherical_to_cartesian(theta: float, phi: float, rho: float) -> np.ndarray:
    """Point at azimuth theta (from +x toward +y), polar angle phi (from +z)."""
    s = np.sin(phi)
    return np.array([rho * np.cos(theta) * s,
                     rho * np.sin(theta) * s,
                     rho * np.cos(phi)])


def project_to_sphere(point: np.ndarray) -> np.ndarray:
    """Unit-sphere projection point / ||point||."""
    point = np.asarray(point, dtype=float)
    norm = np.linalg.norm(point)
    if norm < 1e-12:
        raise ZeroVector("cannot project the zero vector to the sphere")
    return point / norm


def rotation_from_bearing(bearing: float, pitch: float = 0.0) -> np.ndarray:
    """World-from-camera rotation for a camera facing the given compass bearing.

    bearing is clockwise from north; positive pitch tilts the optical axis up.
    Columns are the camera's right/down/forward axes in east-north-up.
    """
    cp, sp = np.cos(pitch), np.sin(pitch)
    forward = np.array([np.sin(bearing) * cp, np.cos(bearing) * cp, sp])
    right = np.array([np.cos(bearing), -np.sin(bearing), 0.0])
    down = np.cross(forward, right)
    return np.column_stack([right, down, forward])


def rig_rotation(rig: VirtualRig, heading: float, yaw_slot: int) -> np.ndarray:
    """World-from-camera rotation of one rig slot on a panorama."""
    return rotation_from_bearing(heading + rig.yaws[yaw_slot], rig.pitch)


# ---------------------------------------------------------------------------
# Pixel <-> ray
# ---------------------------------------------------------------------------

def pixel_to_ray(camera: PinholeCamera, rotation: np.ndarray,
                 pixel: np.ndarray) -> np.ndarray:
    """Unit ray in the panorama frame through a (sub)pixel."""
    u, v = pixel
    d = np.array([(u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0])
    d = rotation @ d
    return d / np.linalg.norm(d)


def ray_to_pixel(camera: PinholeCamera, rotation: np.ndarray,
                 ray: np.ndarray) -> np.ndarray:
    """Forward projection inverse to pixel_to_ray."""
    d = rotation.T @ np.asarray(ray, dtype=float)
    if d[2] <= 1e-12:
        raise ZeroVector("ray points away from the image plane")
    return np.array([camera.fx * d[0] / d[2] + camera.cx,
                     camera.fy * d[1] / d[2] + camera.cy])


def backproject_pixel(camera: PinholeCamera, pixel: np.ndarray,
                      depth: float) -> np.ndarray:
    """Camera-frame 3D point at the given distance along the pixel's ray."""
    if depth <= 0:
        raise UnknownDepth(f"no depth at pixel {tuple(pixel)}")
    u, v = pixel
    d = np.array([(u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0])
    return depth * d / np.linalg.norm(d)


def _camera_ray_grid(camera: PinholeCamera, rotation: np.ndarray) -> np.ndarray:
    """(H, W, 3) unit rays in the panorama frame, one per pixel center."""
    u = np.arange(camera.width, dtype=np.float64)
    v = np.arange(camera.height, dtype=np.float64)
    uu, vv = np.meshgrid(u, v)
    d = np.stack([(uu - camera.cx) / camera.fx,
                  (vv - camera.cy) / camera.fy,
                  np.ones_like(uu)], axis=-1)
    d = d @ rotation.T
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def rays_to_equirect(rays: np.ndarray, heading: float,
                     width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """Continuous equirectangular coordinates of unit rays (pano frame)."""
    bearing = np.arctan2(rays[..., 0], rays[..., 1])          # clockwise from north
    phi = np.arccos(np.clip(rays[..., 2], -1.0, 1.0))
    x = np.mod(bearing - heading + np.pi, 2.0 * np.pi) * (width / (2.0 * np.pi))
    y = phi * (height / np.pi)
    return x, y


def equirect_ray(heading: float, width: int, height: int,
                 x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Unit rays (pano frame) at continuous equirectangular coordinates."""
    bearing = heading + np.asarray(x) * (2.0 * np.pi / width) - np.pi
    phi = np.asarray(y) * (np.pi / height)
    sphi = np.sin(phi)
    return np.stack([np.sin(bearing) * sphi,
                     np.cos(bearing) * sphi,
                     np.cos(phi)], axis=-1)


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def _bilinear_wrap(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Bilinear sample at texel-center coordinates, wrap in x, clamp in y."""
    h, w = img.shape[:2]
    xf = x - 0.5
    yf = np.clip(y - 0.5, 0.0, h - 1.0)
    x0 = np.floor(xf).astype(np.int64)
    y0 = np.floor(yf).astype(np.int64)
    ax = (xf - x0)[..., None] if img.ndim == 3 else xf - x0
    ay = (yf - y0)[..., None] if img.ndim == 3 else yf - y0
    x1 = np.mod(x0 + 1, w)
    x0 = np.mod(x0, w)
    y1 = np.minimum(y0 + 1, h - 1)
    vals = (img[y0, x0] * (1 - ax) * (1 - ay) + img[y0, x1] * ax * (1 - ay)
            + img[y1, x0] * (1 - ax) * ay + img[y1, x1] * ax * ay)
    return vals


def render_rectilinear(panorama: PanoramaImage, camera: PinholeCamera,
                       rotation: np.ndarray) -> np.ndarray:
    """Perspective view sampled from the panorama by back-projection."""
    rays = _camera_ray_grid(camera, rotation)
    x, y = rays_to_equirect(rays, panorama.heading,
                            panorama.width, panorama.height)
    out = _bilinear_wrap(panorama.pixels.astype(np.float64), x, y)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def decode_depth(depthmap: PlanarDepthMap, ray: np.ndarray, pixel) -> float:
    """Distance along ``ray`` to the plane encoded at a depth-map pixel.

    Returns 0.0 ("unknown") when the pixel has no plane or the plane faces
    away from the camera; raises GrazingRay when the ray is parallel to it.
    """
    u, v = int(pixel[0]), int(pixel[1])
    idx = int(depthmap.plane_index[v, u])
    if idx == 0:
        return 0.0
    nx, ny, nz, d = depthmap.planes[idx - 1]
    denom = nx * ray[0] + ny * ray[1] + nz * ray[2]
    if abs(denom) < GRAZING_EPS:
        raise GrazingRay(f"ray parallel to plane {idx}")
    if denom > 0:          # back-facing plane: no valid intersection
        return 0.0
    return -d / denom


def render_depth(depthmap: PlanarDepthMap, camera: PinholeCamera,
                 rotation: np.ndarray) -> np.ndarray:
    """Per-pixel ray distances for a virtual view of the depth map.

    Plane indices are looked up nearest-neighbor (plane identity survives
    upsampling); each pixel's depth is the exact ray-plane intersection.
    Grazing or absent planes yield 0.
    """
    rays = _camera_ray_grid(camera, rotation)
    x, y = rays_to_equirect(rays, depthmap.heading,
                            depthmap.width, depthmap.height)
    u = np.mod(np.floor(x).astype(np.int64), depthmap.width)
    v = np.clip(np.floor(y).astype(np.int64), 0, depthmap.height - 1)
    idx = depthmap.plane_index[v, u]

    depth = np.zeros(rays.shape[:2], dtype=np.float64)
    for i, (nx, ny, nz, d) in enumerate(depthmap.planes, start=1):
        mask = idx == i
        if not mask.any():
            continue
        denom = rays[..., 0] * nx + rays[..., 1] * ny + rays[..., 2] * nz
        valid = mask & (denom < -GRAZING_EPS)
        depth[valid] = -d / denom[valid]
    return depth.astype(np.float32)


def render_view(panorama: PanoramaImage, depthmap: PlanarDepthMap,
                rig: VirtualRig, yaw_slot: int, panorama_id: int) -> RectilinearView:
    """Render one rig slot: image, depth, and pose metadata."""
    rotation = rig_rotation(rig, panorama.heading, yaw_slot)
    image = render_rectilinear(panorama, rig.camera, rotation)
    depth = render_depth(depthmap, rig.camera, rotation)
    return RectilinearView(image=image, depth=depth, camera=rig.camera,
                           rotation=rotation, panorama_id=panorama_id,
                           yaw_slot=yaw_slot, geotag=panorama.geotag)
