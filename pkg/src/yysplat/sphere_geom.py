"""Spherical coordinate conventions and the pixel grids used by the pipeline.

Conventions, fixed across the whole package:

* ``theta`` is elevation from the equator in radians, ``+pi/2`` at the north
  pole, ``-pi/2`` at the south pole.
* ``phi`` is azimuth in radians, wrapped to ``[-pi, pi)``, increasing
  eastward.
* A direction is a unit 3-vector with
  ``x = cos(theta) cos(phi)``, ``y = cos(theta) sin(phi)``,
  ``z = sin(theta)``.
* Pixel ``(u, v)`` of a raster has its center at continuous coordinates
  ``(u + 0.5, v + 0.5)``; row ``v = 0`` is the top of the raster and maps to
  the largest elevation.

The Yin grid covers ``|theta| <= pi/4`` and ``|phi| <= 3*pi/4`` (closed
bounds).  The Yang grid is the image of the Yin grid under the involutory
rotation ``M_YANG``; the two grids together cover the sphere with a small
overlap, and neither contains a coordinate pole in its interior
parameterization.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .io_formats import Pose

YIN_THETA_MAX = math.pi / 4
YIN_PHI_MAX = 3 * math.pi / 4

# Maps the Yin frame onto the Yang frame.  Involutory: M @ M = I.
M_YANG = np.array(
    [
        [-1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 1.0, 0.0],
    ]
)


class GridFamily(enum.Enum):
    EQUIRECT = "equirect"
    YIN = "yin"
    YANG = "yang"
    CUBE_FACE = "cube_face"


@dataclass(frozen=True)
class GridSpec:
    """Pixel grid on the sphere: a family plus a raster size.

    Equirect rasters are ``H x 2H`` and span the whole sphere.  Yin and Yang
    rasters are ``H x 3H`` and span ``Delta theta = pi/2`` by
    ``Delta phi = 3*pi/2`` in their own frame.  Cube faces are square 90-degree
    pinholes; ``face`` (0..5 for +x,-x,+y,-y,+z,-z) labels the rig slot, the
    pixel mapping itself is the canonical +z-forward face.
    """

    family: GridFamily
    height: int
    width: int
    face: int | None = None

    def __post_init__(self) -> None:
        if self.height < 1 or self.width < 1:
            raise ValueError("grid dimensions must be positive")
        if self.family is GridFamily.EQUIRECT and self.width != 2 * self.height:
            raise ValueError("equirect grids require width == 2 * height")
        if self.family in (GridFamily.YIN, GridFamily.YANG):
            if self.width != 3 * self.height:
                raise ValueError("yin/yang grids require width == 3 * height")
        if self.family is GridFamily.CUBE_FACE:
            if self.width != self.height:
                raise ValueError("cube faces are square")
            if self.face is None or not 0 <= self.face <= 5:
                raise ValueError("cube faces require face index in 0..5")
        elif self.face is not None:
            raise ValueError("face index is only valid for cube faces")

    @classmethod
    def equirect(cls, height: int) -> "GridSpec":
        return cls(GridFamily.EQUIRECT, height, 2 * height)

    @classmethod
    def yin(cls, height: int) -> "GridSpec":
        return cls(GridFamily.YIN, height, 3 * height)

    @classmethod
    def yang(cls, height: int) -> "GridSpec":
        return cls(GridFamily.YANG, height, 3 * height)

    @classmethod
    def cube_face(cls, face: int, resolution: int) -> "GridSpec":
        return cls(GridFamily.CUBE_FACE, resolution, resolution, face)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)


def wrap_phi(phi):
    """Wrap azimuth to [-pi, pi)."""
    return (np.asarray(phi, dtype=float) + math.pi) % (2 * math.pi) - math.pi


def spherical_to_direction(theta, phi) -> np.ndarray:
    """Unit direction(s) for elevation/azimuth arrays of any common shape."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    cos_t = np.cos(theta)
    return np.stack(
        [cos_t * np.cos(phi), cos_t * np.sin(phi), np.sin(theta)], axis=-1
    )


def direction_to_spherical(dirs) -> tuple[np.ndarray, np.ndarray]:
    """Elevation/azimuth of direction(s); the input need not be unit length.

    Returns:
        (theta, phi) arrays with phi wrapped to [-pi, pi).
    """
    d = np.asarray(dirs, dtype=float)
    theta = np.arctan2(d[..., 2], np.hypot(d[..., 0], d[..., 1]))
    phi = wrap_phi(np.arctan2(d[..., 1], d[..., 0]))
    return theta, phi


def yin_contains(theta, phi) -> np.ndarray:
    """Membership of (theta, phi) in the closed Yin bounds."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    return (np.abs(theta) <= YIN_THETA_MAX) & (np.abs(phi) <= YIN_PHI_MAX)


def yang_transform(dirs) -> np.ndarray:
    """Apply the Yin<->Yang rotation to direction(s).  Self-inverse."""
    return np.asarray(dirs, dtype=float) @ M_YANG.T


def yang_contains(dirs) -> np.ndarray:
    """Membership of world direction(s) in the Yang grid's angular bounds."""
    theta, phi = direction_to_spherical(yang_transform(dirs))
    return yin_contains(theta, phi)


def yin_boundary_distance(theta, phi) -> np.ndarray:
    """Angular distance to the Yin bounds; positive inside, negative outside."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    return np.minimum(YIN_THETA_MAX - np.abs(theta), YIN_PHI_MAX - np.abs(phi))


def _angles_of_centers(grid: GridSpec, u, v) -> tuple[np.ndarray, np.ndarray]:
    """(theta, phi) at pixel centers of a spherical grid (local frame)."""
    uc = np.asarray(u, dtype=float) + 0.5
    vc = np.asarray(v, dtype=float) + 0.5
    if grid.family is GridFamily.EQUIRECT:
        phi = 2 * math.pi * uc / grid.width - math.pi
        theta = math.pi / 2 - math.pi * vc / grid.height
    else:  # yin or yang local angles
        phi = 1.5 * math.pi * uc / grid.width - 0.75 * math.pi
        theta = 0.5 * math.pi * (0.5 - vc / grid.height)
    return theta, phi


def pixel_to_direction(grid: GridSpec, u, v) -> np.ndarray:
    """Direction(s) at the centers of integer pixel indices ``(u, v)``.

    For spherical families the direction is expressed in the camera frame;
    Yang applies ``M_YANG`` to its local parameterization.  Cube faces use the
    canonical +z-forward unit-cube parameterization.

    Raises:
        ValueError: on non-integer or out-of-range indices.
    """
    u = np.asarray(u)
    v = np.asarray(v)
    if not (np.issubdtype(u.dtype, np.integer) and np.issubdtype(v.dtype, np.integer)):
        raise ValueError("pixel indices must be integers")
    if np.any(u < 0) or np.any(u >= grid.width) or np.any(v < 0) or np.any(v >= grid.height):
        raise ValueError("pixel index out of range")
    if grid.family is GridFamily.CUBE_FACE:
        a = 2.0 * (u + 0.5) / grid.width - 1.0
        b = 1.0 - 2.0 * (v + 0.5) / grid.height
        d = np.stack([a, b, np.ones_like(a)], axis=-1)
        return d / np.linalg.norm(d, axis=-1, keepdims=True)
    theta, phi = _angles_of_centers(grid, u, v)
    d = spherical_to_direction(theta, phi)
    if grid.family is GridFamily.YANG:
        d = yang_transform(d)
    return d


def grid_directions(grid: GridSpec) -> np.ndarray:
    """(H, W, 3) directions at every pixel center of the grid."""
    v, u = np.meshgrid(
        np.arange(grid.height), np.arange(grid.width), indexing="ij"
    )
    return pixel_to_direction(grid, u, v)


def direction_to_pixel(grid: GridSpec, dirs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Continuous pixel coordinates of direction(s) plus an inside flag.

    The returned coordinates live in the edge-origin convention: pixel ``(u, v)``
    center sits at ``(u + 0.5, v + 0.5)``.  Coordinates are well defined
    slightly beyond the raster for Yin/Yang (the angular window extends), and
    ``inside`` reports membership in the grid's angular bounds (always true
    for equirect).

    Returns:
        (u, v, inside) arrays broadcast to the input batch shape.
    """
    d = np.asarray(dirs, dtype=float)
    if grid.family is GridFamily.CUBE_FACE:
        x, y, z = d[..., 0], d[..., 1], d[..., 2]
        safe_z = np.where(np.abs(z) < 1e-300, 1e-300, z)
        a = x / safe_z
        b = y / safe_z
        u = (a + 1.0) * grid.width / 2.0
        v = (1.0 - b) * grid.height / 2.0
        inside = (z > 0) & (np.abs(a) <= 1.0) & (np.abs(b) <= 1.0)
        return u, v, inside
    if grid.family is GridFamily.YANG:
        d = yang_transform(d)
    theta, phi = direction_to_spherical(d)
    if grid.family is GridFamily.EQUIRECT:
        u = (phi + math.pi) * grid.width / (2 * math.pi)
        v = (math.pi / 2 - theta) * grid.height / math.pi
        inside = np.ones(np.shape(theta), dtype=bool)
    else:
        u = (phi + 0.75 * math.pi) * grid.width / (1.5 * math.pi)
        v = (0.5 - 2.0 * theta / math.pi) * grid.height
        inside = yin_contains(theta, phi)
    return u, v, inside


def angular_pixel_step(grid: GridSpec) -> float:
    """Vertical angular extent of one pixel, radians.

    Equals the horizontal extent at the grid family's own equator; used as the
    isotropic footprint of pixel-aligned Gaussians.
    """
    if grid.family is GridFamily.EQUIRECT:
        return math.pi / grid.height
    if grid.family in (GridFamily.YIN, GridFamily.YANG):
        return math.pi / (2 * grid.height)
    return (math.pi / 2) / grid.height


# Per-face (right, up, forward) triples in world coordinates, all
# right-handed with right x up = forward.  Order: +x, -x, +y, -y, +z, -z.
_CUBE_FRAMES = (
    ((0.0, 1.0, 0.0), (0.0, 0.0, 1.0), (1.0, 0.0, 0.0)),
    ((0.0, -1.0, 0.0), (0.0, 0.0, 1.0), (-1.0, 0.0, 0.0)),
    ((-1.0, 0.0, 0.0), (0.0, 0.0, 1.0), (0.0, 1.0, 0.0)),
    ((1.0, 0.0, 0.0), (0.0, 0.0, 1.0), (0.0, -1.0, 0.0)),
    ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)),
    ((-1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, -1.0)),
)


def cubemap_rig(face_resolution: int) -> list[tuple[GridSpec, Pose]]:
    """Six 90-degree pinhole faces covering the sphere from a shared center.

    Each entry pairs a canonical CubeFace grid with the world-to-camera pose
    that points it along +x, -x, +y, -y, +z, -z; translations are zero.

    Raises:
        ValueError: on face_resolution < 1.
    """
    if face_resolution < 1:
        raise ValueError("face resolution must be positive")
    rig = []
    for face, (right, up, forward) in enumerate(_CUBE_FRAMES):
        rotation = np.array([right, up, forward], dtype=float)
        rig.append(
            (GridSpec.cube_face(face, face_resolution), Pose(rotation, np.zeros(3)))
        )
    return rig
