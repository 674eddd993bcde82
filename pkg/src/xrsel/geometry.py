"""Surface/head scene geometry and the head-coupled oblique camera.

World frame is right-handed, all lengths in meters.  The display surface is
a rectangle with its own orthonormal frame; ``axis_z`` is the surface normal
and points into the half-space where the viewer's head lives ("above").  The
camera derived by :func:`compute_surface_camera` sits at the head position,
looks perpendicularly at the surface, and uses the surface rectangle itself
as the near plane of an off-axis perspective frustum, so that anything drawn
on the surface lines up exactly with the world seen from the head.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

# 28-inch interactive surface, active area in meters
DEFAULT_SURFACE_WIDTH = 0.637
DEFAULT_SURFACE_HEIGHT = 0.438

_ORTHO_TOL = 1e-9
_UNIT_TOL = 1e-9


class GeometryError(ValueError):
    """Invalid or degenerate geometric configuration."""


def _as_vec3(v, name: str = "vector") -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    if a.shape != (3,):
        raise GeometryError(f"{name} must have 3 components, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise GeometryError(f"{name} has non-finite components: {a}")
    return a


def normalize(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise GeometryError("cannot normalize zero-length vector")
    return v / n


@dataclass(frozen=True)
class SurfaceGeometry:
    """The physical display rectangle: center, in-plane x axis, normal, size."""

    center: np.ndarray
    axis_x: np.ndarray
    axis_z: np.ndarray
    width: float = DEFAULT_SURFACE_WIDTH
    height: float = DEFAULT_SURFACE_HEIGHT

    def __post_init__(self):
        object.__setattr__(self, "center", _as_vec3(self.center, "center"))
        object.__setattr__(self, "axis_x", _as_vec3(self.axis_x, "axis_x"))
        object.__setattr__(self, "axis_z", _as_vec3(self.axis_z, "axis_z"))
        for name in ("axis_x", "axis_z"):
            v = getattr(self, name)
            if abs(float(np.linalg.norm(v)) - 1.0) > _UNIT_TOL:
                raise GeometryError(f"{name} must be unit length, |v|={np.linalg.norm(v)}")
        if abs(float(np.dot(self.axis_x, self.axis_z))) > _ORTHO_TOL:
            raise GeometryError("axis_x and axis_z must be perpendicular")
        if not (self.width > 0 and self.height > 0):
            raise GeometryError("surface width and height must be positive")

    @property
    def axis_y(self) -> np.ndarray:
        """In-plane vertical axis completing the right-handed frame."""
        return np.cross(self.axis_z, self.axis_x)

    def signed_distance(self, point) -> float:
        """Distance from the surface plane, positive on the 'above' side."""
        p = np.asarray(point, dtype=np.float64)
        return float(np.dot(self.axis_z, p - self.center))

    def to_local(self, point) -> tuple[float, float, float]:
        """(u, v, w) coordinates in the surface frame, origin at the center."""
        d = np.asarray(point, dtype=np.float64) - self.center
        return (
            float(np.dot(self.axis_x, d)),
            float(np.dot(self.axis_y, d)),
            float(np.dot(self.axis_z, d)),
        )

    def from_local(self, u: float, v: float) -> np.ndarray:
        """World position of in-plane local coordinates (u, v)."""
        return self.center + u * self.axis_x + v * self.axis_y

    def corners(self) -> np.ndarray:
        """The 4 rectangle corners (bl, br, tr, tl) as a (4, 3) array."""
        hw, hh = 0.5 * self.width, 0.5 * self.height
        return np.stack(
            [
                self.from_local(-hw, -hh),
                self.from_local(hw, -hh),
                self.from_local(hw, hh),
                self.from_local(-hw, hh),
            ]
        )


def surface_frame(surface: SurfaceGeometry) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return the surface's right-handed orthonormal frame (x, y, z)."""
    return surface.axis_x, surface.axis_y, surface.axis_z


@dataclass(frozen=True)
class HeadPose:
    """Viewer head position (and optional gaze direction) in world meters."""

    position: np.ndarray
    gaze: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "position", _as_vec3(self.position, "head position"))
        if self.gaze is not None:
            g = _as_vec3(self.gaze, "gaze")
            if abs(float(np.linalg.norm(g)) - 1.0) > _UNIT_TOL:
                raise GeometryError("gaze must be a unit vector")
            object.__setattr__(self, "gaze", g)


class Ray(NamedTuple):
    origin: np.ndarray
    direction: np.ndarray


class NdcPoint(NamedTuple):
    """Result of a projection: clip-space coordinates after the divide."""

    x: float
    y: float
    depth: float
    in_frustum: bool


def frustum_matrix(left: float, right: float, bottom: float, top: float,
                   near: float, far: float) -> np.ndarray:
    """Off-axis perspective matrix mapping the near-plane window to NDC [-1, 1]^3.

    ``left``/``right``/``bottom``/``top`` are the window extents measured on
    the near plane in camera coordinates; the camera looks along -z.
    """
    if near <= 0:
        raise GeometryError(f"near plane distance must be positive, got {near}")
    if far <= near:
        raise GeometryError(f"far plane ({far}) must exceed near plane ({near})")
    if right <= left or top <= bottom:
        raise GeometryError("degenerate frustum window")
    m = np.zeros((4, 4), dtype=np.float64)
    m[0, 0] = 2.0 * near / (right - left)
    m[0, 2] = (right + left) / (right - left)
    m[1, 1] = 2.0 * near / (top - bottom)
    m[1, 2] = (top + bottom) / (top - bottom)
    m[2, 2] = -(far + near) / (far - near)
    m[2, 3] = -2.0 * far * near / (far - near)
    m[3, 2] = -1.0
    return m


@dataclass(frozen=True)
class ProjectionSetup:
    """Per-frame camera for the surface: view rotation, eye, frustum, matrix.

    ``view_rotation`` has the camera basis vectors as rows, so camera
    coordinates of a world point p are ``view_rotation @ (p - eye)``.
    ``corner_bl``/``corner_tr`` are the surface rectangle corners expressed
    in those camera coordinates (their z component equals ``-near``).
    """

    view_rotation: np.ndarray
    eye: np.ndarray
    corner_bl: np.ndarray
    corner_tr: np.ndarray
    near: float
    far: float
    projection: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        r = np.asarray(self.view_rotation, dtype=np.float64)
        if r.shape != (3, 3):
            raise GeometryError("view_rotation must be 3x3")
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-9):
            raise GeometryError("view_rotation must be orthonormal")
        object.__setattr__(self, "view_rotation", r)
        object.__setattr__(self, "eye", _as_vec3(self.eye, "eye"))
        object.__setattr__(self, "corner_bl", _as_vec3(self.corner_bl, "corner_bl"))
        object.__setattr__(self, "corner_tr", _as_vec3(self.corner_tr, "corner_tr"))
        if self.projection is None:
            object.__setattr__(self, "projection", self.recompute_projection())

    def recompute_projection(self) -> np.ndarray:
        """Rebuild the projection matrix from the stored window; bit-identical."""
        return frustum_matrix(
            float(self.corner_bl[0]),
            float(self.corner_tr[0]),
            float(self.corner_bl[1]),
            float(self.corner_tr[1]),
            self.near,
            self.far,
        )

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return (pts - self.eye) @ self.view_rotation.T

    def to_dict(self) -> dict:
        """JSON-friendly representation; matrices flattened row-major."""
        view = np.eye(4)
        view[:3, :3] = self.view_rotation
        view[:3, 3] = -self.view_rotation @ self.eye
        return {
            "eye": [float(c) for c in self.eye],
            "view_rotation": [float(c) for c in self.view_rotation.ravel()],
            "view": [float(c) for c in view.ravel()],
            "projection": [float(c) for c in self.projection.ravel()],
            "corner_bl": [float(c) for c in self.corner_bl],
            "corner_tr": [float(c) for c in self.corner_tr],
            "near": self.near,
            "far": self.far,
        }


def default_far(near: float, data_diagonal: float) -> float:
    """Far plane enclosing all data below the surface: near + 4 x bbox diagonal."""
    return near + 4.0 * data_diagonal


def compute_surface_camera(head: HeadPose, surface: SurfaceGeometry,
                           far: float) -> ProjectionSetup:
    """Derive the oblique per-frame camera for the current head position.

    The eye is placed at the head, the camera's -z axis points
    perpendicularly at the surface (camera z = surface normal), its x axis
    coincides with the surface's x axis, and the surface rectangle serves as
    the near-plane window of the off-axis frustum.
    """
    near = surface.signed_distance(head.position)
    if near <= 0:
        raise GeometryError(
            f"head must be strictly above the surface plane (signed distance {near})"
        )
    if far <= near:
        raise GeometryError(f"far plane ({far}) must exceed head-plane distance ({near})")
    rot = np.stack([surface.axis_x, surface.axis_y, surface.axis_z])
    corners = surface.corners()
    cam = (corners - head.position) @ rot.T
    setup = ProjectionSetup(
        view_rotation=rot,
        eye=head.position,
        corner_bl=cam[0],
        corner_tr=cam[2],
        near=near,
        far=far,
    )
    return setup


def project_to_surface(point, setup: ProjectionSetup) -> NdcPoint:
    """Project a world point through the surface camera to NDC.

    Out-of-frustum points are reported with ``in_frustum=False`` rather than
    clamped.  A point in the eye plane (homogeneous w = 0) has no projection.
    """
    cam = setup.world_to_camera(_as_vec3(point, "point"))[0]
    clip = setup.projection @ np.append(cam, 1.0)
    w = clip[3]
    if abs(w) < 1e-15 * max(1.0, setup.near):
        raise GeometryError("point lies in the eye plane; projection is degenerate")
    x, y, z = clip[0] / w, clip[1] / w, clip[2] / w
    inside = bool(w > 0 and -1.0 <= x <= 1.0 and -1.0 <= y <= 1.0 and -1.0 <= z <= 1.0)
    return NdcPoint(float(x), float(y), float(z), inside)


def surface_ray(sample, head: HeadPose) -> Ray:
    """Ray from an on-surface sample away from the head, into the data space."""
    origin = _as_vec3(sample, "sample")
    d = origin - head.position
    n = float(np.linalg.norm(d))
    if n < 1e-12:
        raise GeometryError("sample coincides with the head position")
    return Ray(origin, d / n)


def point_in_surface_rect(point, surface: SurfaceGeometry, eps: float) -> bool:
    """True iff the point lies on the plane (within eps) and inside the rectangle."""
    u, v, w = surface.to_local(point)
    return (
        abs(w) <= eps
        and abs(u) <= 0.5 * surface.width
        and abs(v) <= 0.5 * surface.height
    )


def snap_to_plane(point, surface: SurfaceGeometry) -> np.ndarray:
    """Orthogonal projection of a point onto the surface plane."""
    p = _as_vec3(point, "point")
    return p - surface.signed_distance(p) * surface.axis_z


def scene_from_dict(doc: dict) -> tuple[SurfaceGeometry, HeadPose, float | None]:
    """Parse the scene configuration document.

    Schema: ``{"surface": {"center": [..], "axis_x": [..], "axis_z": [..],
    "width": w, "height": h}, "head": {"position": [..]}, "far": f?}``.
    ``far`` is optional; callers fall back to :func:`default_far`.
    """
    try:
        s = doc["surface"]
        surface = SurfaceGeometry(
            center=s["center"],
            axis_x=s["axis_x"],
            axis_z=s["axis_z"],
            width=float(s.get("width", DEFAULT_SURFACE_WIDTH)),
            height=float(s.get("height", DEFAULT_SURFACE_HEIGHT)),
        )
        head = HeadPose(position=doc["head"]["position"])
    except KeyError as e:
        raise GeometryError(f"scene config missing field: {e}") from e
    far = doc.get("far")
    return surface, head, (float(far) if far is not None else None)


def load_scene(path) -> tuple[SurfaceGeometry, HeadPose, float | None]:
    with open(path, "r", encoding="utf-8") as f:
        return scene_from_dict(json.load(f))


def tilted_surface(tilt_deg: float, center=(0.0, 0.0, 0.0),
                   width: float = DEFAULT_SURFACE_WIDTH,
                   height: float = DEFAULT_SURFACE_HEIGHT) -> SurfaceGeometry:
    """A desk surface inclined by ``tilt_deg`` about the world x axis.

    At 0 degrees the surface is horizontal with its normal along +z; tilting
    raises the far edge the way a drafting-table screen reclines.
    """
    t = np.radians(tilt_deg)
    axis_x = np.array([1.0, 0.0, 0.0])
    axis_z = np.array([0.0, -np.sin(t), np.cos(t)])
    return SurfaceGeometry(center=np.asarray(center, dtype=np.float64),
                           axis_x=axis_x, axis_z=axis_z,
                           width=width, height=height)
