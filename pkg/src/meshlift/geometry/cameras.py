"""Pinhole cameras, look-at view rings, and bounding-sphere helpers.

Conventions: world is y-up, scenes fit the unit bounding sphere centered at
the origin, cameras always look at the origin. Image coordinates follow the
half-integer pixel-center rule (texel (i,j) covers [i,i+1)x[j,j+1)), with u
along +x(right) and v down.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

WORLD_UP = np.array([0.0, 1.0, 0.0])


@dataclass(frozen=True)
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray  # world->camera, rows are camera axes
    translation: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-6) or abs(np.linalg.det(r) - 1.0) > 1e-6:
            raise ValueError("rotation must be orthonormal with determinant +1")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the image")

    @property
    def position(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return pts @ self.rotation.T + self.translation

    def camera_to_world(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return (pts - self.translation) @ self.rotation

    def serialize_key(self) -> bytes:
        """Canonical byte key used to order and deduplicate views."""
        buf = np.concatenate([[self.fx, self.fy, self.cx, self.cy],
                              self.rotation.reshape(-1), self.translation,
                              [self.width, self.height]])
        return buf.astype(np.float64).tobytes()


def project(camera: Camera, points: np.ndarray):
    """Pinhole projection; returns (uv, depth) with depth = camera-space z.

    Points behind the camera come back with depth <= 0; their uv values are
    finite but meaningless, and the caller decides the handling.
    """
    single = np.asarray(points).ndim == 1
    pc = camera.world_to_camera(points)
    z = pc[:, 2]
    safe_z = np.where(np.abs(z) < 1e-12, 1e-12, z)
    u = camera.fx * pc[:, 0] / safe_z + camera.cx
    v = camera.fy * pc[:, 1] / safe_z + camera.cy
    uv = np.stack([u, v], axis=1)
    if single:
        return uv[0], float(z[0])
    return uv, z


def unproject(camera: Camera, uv: np.ndarray, depth: np.ndarray) -> np.ndarray:
    """Inverse of project at a known camera-space depth."""
    uv = np.atleast_2d(np.asarray(uv, dtype=np.float64))
    d = np.atleast_1d(np.asarray(depth, dtype=np.float64))
    x = (uv[:, 0] - camera.cx) / camera.fx * d
    y = (uv[:, 1] - camera.cy) / camera.fy * d
    pc = np.stack([x, y, d], axis=1)
    out = camera.camera_to_world(pc)
    return out[0] if out.shape[0] == 1 and np.asarray(uv).ndim == 2 and len(d) == 1 else out


def look_at(position: np.ndarray, target=None, up=WORLD_UP):
    """World->camera rotation/translation for a camera at position facing target."""
    position = np.asarray(position, dtype=np.float64)
    target = np.zeros(3) if target is None else np.asarray(target, dtype=np.float64)
    fwd = target - position
    fwd = fwd / np.linalg.norm(fwd)
    up = np.asarray(up, dtype=np.float64)
    if np.linalg.norm(np.cross(fwd, up)) < 1e-8:
        up = up + np.array([1e-3, 0.0, 1e-3])  # degenerate top/bottom view
    right = np.cross(fwd, up)
    right = right / np.linalg.norm(right)
    down = np.cross(fwd, right)
    rot = np.stack([right, down, fwd], axis=0)
    trans = -rot @ position
    return rot, trans


def orbit_position(azimuth_deg: float, elevation_deg: float, radius: float) -> np.ndarray:
    """Camera center on the view sphere; azimuth 0 sits on +z."""
    az = np.deg2rad(azimuth_deg)
    el = np.deg2rad(elevation_deg)
    return radius * np.array([np.cos(el) * np.sin(az), np.sin(el), np.cos(el) * np.cos(az)])


def camera_from_angles(azimuth_deg: float, elevation_deg: float, radius: float,
                       width: int = 64, height: int = 64,
                       fit_margin: float = 1.2) -> Camera:
    """Look-at camera on the view sphere, focal length set so the unit
    bounding sphere fits the frame with the given margin."""
    if radius <= 1.0:
        raise ValueError(f"camera radius {radius} must exceed the unit bounding sphere")
    pos = orbit_position(azimuth_deg, elevation_deg, radius)
    rot, trans = look_at(pos)
    tan_half = np.tan(np.arcsin(1.0 / radius)) * fit_margin
    f = (width / 2.0) / tan_half
    return Camera(fx=f, fy=f, cx=width / 2.0, cy=height / 2.0,
                  rotation=rot, translation=trans, width=width, height=height)


@dataclass
class ViewSet:
    """Ordered cameras with index 0 as the reference view."""

    cameras: list[Camera]
    azimuths: list[float]
    elevations: list[float]
    radius: float
    reference_index: int = 0

    def __post_init__(self):
        if len(self.cameras) != len(self.azimuths) or len(self.cameras) != len(self.elevations):
            raise ValueError("per-view metadata must match camera count")
        if self.reference_index != 0:
            raise ValueError("reference view must sit at index 0")

    def __len__(self) -> int:
        return len(self.cameras)

    @property
    def reference(self) -> Camera:
        return self.cameras[0]

    def angular_distances(self) -> np.ndarray:
        """Angle (degrees) between each view direction and the reference's."""
        dirs = np.stack([c.position / np.linalg.norm(c.position) for c in self.cameras])
        cosd = np.clip(dirs @ dirs[0], -1.0, 1.0)
        return np.rad2deg(np.arccos(cosd))

    def to_manifest(self) -> str:
        lines = ["# index azimuth elevation radius fx fy cx cy width height"]
        for i, cam in enumerate(self.cameras):
            lines.append(f"{i} {self.azimuths[i]:.9g} {self.elevations[i]:.9g} "
                         f"{self.radius:.9g} {cam.fx:.17g} {cam.fy:.17g} "
                         f"{cam.cx:.17g} {cam.cy:.17g} {cam.width} {cam.height}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_manifest(cls, text: str) -> "ViewSet":
        cams, azs, els = [], [], []
        radius = None
        for line in io.StringIO(text):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 10:
                raise ValueError(f"malformed view manifest line: {line!r}")
            _, az, el, rad, fx, fy, cx, cy, w, h = parts
            az, el, rad = float(az), float(el), float(rad)
            pos = orbit_position(az, el, rad)
            rot, trans = look_at(pos)
            cams.append(Camera(fx=float(fx), fy=float(fy), cx=float(cx), cy=float(cy),
                               rotation=rot, translation=trans,
                               width=int(w), height=int(h)))
            azs.append(az)
            els.append(el)
            radius = rad
        if not cams:
            raise ValueError("empty view manifest")
        return cls(cameras=cams, azimuths=azs, elevations=els, radius=radius)


DEFAULT_RING_AZIMUTHS = [30.0, 90.0, 150.0, 210.0, 270.0, 330.0]
DEFAULT_RING_ELEVATIONS = [30.0, -20.0, 30.0, -20.0, 30.0, -20.0]


def make_ring_views(n_views: int, azimuth_offsets, elevations, radius: float,
                    width: int = 64, height: int = 64) -> ViewSet:
    """Cameras on a sphere of the given radius, all aimed at the origin.

    View 0 is the reference view; azimuth offsets are absolute azimuths of
    each view (callers shift them by a reference azimuth when needed).
    """
    if radius <= 1.0:
        raise ValueError(f"ring radius {radius} must exceed the unit bounding sphere")
    azimuth_offsets = list(azimuth_offsets)
    elevations = list(elevations)
    if len(azimuth_offsets) != n_views or len(elevations) != n_views:
        raise ValueError("azimuth/elevation lists must have length n_views")
    cams = [camera_from_angles(a, e, radius, width, height)
            for a, e in zip(azimuth_offsets, elevations)]
    return ViewSet(cameras=cams, azimuths=azimuth_offsets, elevations=elevations,
                   radius=radius)


def training_viewset(radius: float = 2.5, ref_azimuth: float = 0.0,
                     ref_elevation: float = 20.0, width: int = 64,
                     height: int = 64) -> ViewSet:
    """Reference view plus the default six-view ring, azimuths relative to it."""
    azs = [ref_azimuth] + [(ref_azimuth + off) % 360.0 for off in DEFAULT_RING_AZIMUTHS]
    els = [ref_elevation] + list(DEFAULT_RING_ELEVATIONS)
    return make_ring_views(7, azs, els, radius, width, height)


def uniform_view_sphere(n: int, radius: float, width: int = 64,
                        height: int = 64) -> list[Camera]:
    """Fibonacci-sphere camera placement, deterministic and seedless."""
    if n < 2:
        raise ValueError("need at least 2 views")
    golden = (1.0 + np.sqrt(5.0)) / 2.0
    cams = []
    for i in range(n):
        z = 1.0 - 2.0 * (i + 0.5) / n
        phi = 2.0 * np.pi * i / golden
        r_xy = np.sqrt(max(0.0, 1.0 - z * z))
        pos = radius * np.array([r_xy * np.cos(phi), z, r_xy * np.sin(phi)])
        rot, trans = look_at(pos)
        tan_half = np.tan(np.arcsin(1.0 / radius)) * 1.2
        f = (width / 2.0) / tan_half
        cams.append(Camera(fx=f, fy=f, cx=width / 2.0, cy=height / 2.0,
                           rotation=rot, translation=trans, width=width, height=height))
    return cams


def bounding_sphere_min_depth(camera: Camera, radius: float = 1.0) -> float:
    """Distance from the camera center to the bounding sphere surface."""
    dist = float(np.linalg.norm(camera.position))
    if dist <= radius:
        raise ValueError(f"camera at distance {dist:.3f} lies inside the bounding sphere")
    return dist - radius
