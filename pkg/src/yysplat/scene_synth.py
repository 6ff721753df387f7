"""Procedural test scenes with exact ray-traced ground truth.

Scenes pair a Gaussian cloud with (where meaningful) an analytically
traceable surface model carrying the same deterministic value-noise texture,
so splat renders, warped features, and recovered depths can all be checked
against closed-form references.  Everything is seeded; no data files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import sphere_geom as sg
from .gaussians import SH_C0, GaussianCloud
from .io_formats import Pose

_HASH_X = np.uint64(73856093)
_HASH_Y = np.uint64(19349663)
_HASH_Z = np.uint64(83492791)
_HASH_SEED = np.uint64(2654435761)
_MIX = np.uint64(0xFF51AFD7ED558CCD)
_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


def _hash_lattice(ix: np.ndarray, iy: np.ndarray, iz: np.ndarray, seed: int) -> np.ndarray:
    """Deterministic [0, 1) value per integer lattice point."""
    h = (
        ix.astype(np.uint64) * _HASH_X
        ^ iy.astype(np.uint64) * _HASH_Y
        ^ iz.astype(np.uint64) * _HASH_Z
        ^ np.uint64(seed & 0xFFFFFFFFFFFFFFFF) * _HASH_SEED
    )
    h ^= h >> np.uint64(33)
    h *= _MIX
    h ^= h >> np.uint64(33)
    return (h >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def value_noise(points: np.ndarray, seed: int, octaves: int = 1, frequency: float = 1.0) -> np.ndarray:
    """Smooth lattice noise in [0, 1) over 3D points, octave-summed."""
    points = np.asarray(points, dtype=float)
    if points.shape[-1] != 3:
        raise ValueError("points must have a trailing dimension of 3")
    if octaves < 1:
        raise ValueError("octaves must be positive")
    total = np.zeros(points.shape[:-1])
    weight_sum = 0.0
    for octave in range(octaves):
        weight = 0.5**octave
        scaled = points * (frequency * 2.0**octave)
        cell = np.floor(scaled)
        frac = scaled - cell
        fade = frac * frac * (3.0 - 2.0 * frac)
        base = cell.astype(np.int64)
        layer = np.zeros(points.shape[:-1])
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    corner = _hash_lattice(
                        base[..., 0] + dx, base[..., 1] + dy, base[..., 2] + dz,
                        seed + octave,
                    )
                    wx = fade[..., 0] if dx else 1.0 - fade[..., 0]
                    wy = fade[..., 1] if dy else 1.0 - fade[..., 1]
                    wz = fade[..., 2] if dz else 1.0 - fade[..., 2]
                    layer += corner * wx * wy * wz
        total += weight * layer
        weight_sum += weight
    return total / weight_sum


def noise_rgb(points: np.ndarray, seed: int, octaves: int, frequency: float) -> np.ndarray:
    """Three independent noise channels mapped into [0.15, 0.85]."""
    channels = [
        value_noise(points, seed + 101 * ch, octaves=octaves, frequency=frequency)
        for ch in range(3)
    ]
    return 0.15 + 0.7 * np.stack(channels, axis=-1)


def fibonacci_sphere(count: int) -> np.ndarray:
    """Near-uniform unit directions, (count, 3)."""
    if count < 1:
        raise ValueError("count must be positive")
    i = np.arange(count)
    z = 1.0 - (2.0 * i + 1.0) / count
    rho = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    phi = i * _GOLDEN_ANGLE
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)


@dataclass(frozen=True)
class TexturedSphere:
    """Sphere with a noise texture fixed in its local frame.

    ``inside`` selects whether rays hit the far (enclosing shell) or near
    (solid object) surface.  World points relate to local ones by
    ``world = local @ orient + center``.
    """

    center: np.ndarray
    radius: float
    seed: int
    inside: bool = False
    frequency: float = 2.0
    octaves: int = 2
    orient: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        orient = np.eye(3) if self.orient is None else np.asarray(self.orient, dtype=float)
        object.__setattr__(self, "orient", orient)

    def trace(self, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        oc = origins - self.center
        b = np.einsum("ij,ij->i", oc, dirs)
        c = np.einsum("ij,ij->i", oc, oc) - self.radius**2
        disc = b * b - c
        root = np.sqrt(np.maximum(disc, 0.0))
        near = -b - root
        far = -b + root
        if self.inside:
            t = far
        else:
            t = np.where(near > 1e-9, near, far)
        return np.where((disc >= 0) & (t > 1e-9), t, np.inf)

    def surface_color(self, points: np.ndarray) -> np.ndarray:
        local = (points - self.center) @ self.orient.T
        return noise_rgb(local, self.seed, self.octaves, self.frequency)

    def transformed(self, rotation: np.ndarray, translation: np.ndarray) -> TexturedSphere:
        rotation = np.asarray(rotation, dtype=float)
        translation = np.asarray(translation, dtype=float)
        return replace(
            self,
            center=self.center @ rotation.T + translation,
            orient=self.orient @ rotation.T,
        )


@dataclass(frozen=True)
class ConstantSphere:
    """Single-color sphere; same ray interface as the textured objects."""

    center: np.ndarray
    radius: float
    color: np.ndarray
    inside: bool = False

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "color", np.asarray(self.color, dtype=float))

    def trace(self, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        oc = origins - self.center
        b = np.einsum("ij,ij->i", oc, dirs)
        c = np.einsum("ij,ij->i", oc, oc) - self.radius**2
        disc = b * b - c
        root = np.sqrt(np.maximum(disc, 0.0))
        near = -b - root
        far = -b + root
        t = far if self.inside else np.where(near > 1e-9, near, far)
        return np.where((disc >= 0) & (t > 1e-9), t, np.inf)

    def surface_color(self, points: np.ndarray) -> np.ndarray:
        return np.broadcast_to(self.color, points.shape[:-1] + (3,)).copy()

    def transformed(self, rotation: np.ndarray, translation: np.ndarray) -> ConstantSphere:
        rotation = np.asarray(rotation, dtype=float)
        translation = np.asarray(translation, dtype=float)
        return replace(self, center=self.center @ rotation.T + translation)


@dataclass(frozen=True)
class TexturedRoom:
    """Axis-aligned box room seen from inside, noise-textured walls.

    ``half`` is either a scalar (cube) or a per-axis half-extent triple.
    """

    half: float
    seed: int
    center: np.ndarray = None  # type: ignore[assignment]
    frequency: float = 1.2
    octaves: int = 3
    orient: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        half = np.broadcast_to(np.asarray(self.half, dtype=float), (3,)).copy()
        object.__setattr__(self, "half", half)
        center = np.zeros(3) if self.center is None else np.asarray(self.center, dtype=float)
        object.__setattr__(self, "center", center)
        orient = np.eye(3) if self.orient is None else np.asarray(self.orient, dtype=float)
        object.__setattr__(self, "orient", orient)

    def trace(self, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        o = (origins - self.center) @ self.orient.T
        d = dirs @ self.orient.T
        with np.errstate(divide="ignore", invalid="ignore"):
            exits = (np.sign(d) * self.half - o) / d
        exits = np.where(np.abs(d) < 1e-12, np.inf, exits)
        t = exits.min(axis=1)
        return np.where(t > 1e-9, t, np.inf)

    def surface_color(self, points: np.ndarray) -> np.ndarray:
        local = (points - self.center) @ self.orient.T
        # Per-wall seed offsets decorrelate the texture across wall folds,
        # which keeps stereo matching unambiguous near the corners.
        axis = np.argmax(np.abs(local) / self.half, axis=-1)
        face = 2 * axis + (np.take_along_axis(local, axis[..., None], axis=-1)[..., 0] < 0)
        color = np.empty(local.shape[:-1] + (3,))
        for face_id in range(6):
            mask = face == face_id
            if np.any(mask):
                color[mask] = noise_rgb(
                    local[mask], self.seed + 7793 * face_id, self.octaves, self.frequency
                )
        return color

    def transformed(self, rotation: np.ndarray, translation: np.ndarray) -> TexturedRoom:
        rotation = np.asarray(rotation, dtype=float)
        translation = np.asarray(translation, dtype=float)
        return replace(
            self,
            center=self.center @ rotation.T + translation,
            orient=self.orient @ rotation.T,
        )


@dataclass(frozen=True)
class SceneGeometry:
    """Union of traceable objects; nearest positive hit wins."""

    objects: tuple

    def trace(self, origins: np.ndarray, dirs: np.ndarray):
        """Per ray: (distance, 1-based winning object id or 0, color)."""
        count = origins.shape[0]
        all_t = np.stack([obj.trace(origins, dirs) for obj in self.objects], axis=1)
        winner = np.argmin(all_t, axis=1)
        t = all_t[np.arange(count), winner]
        labels = np.where(np.isfinite(t), winner + 1, 0)
        colors = np.zeros((count, 3))
        hits = origins + np.where(np.isfinite(t), t, 0.0)[:, None] * dirs
        for index, obj in enumerate(self.objects):
            mask = labels == index + 1
            if np.any(mask):
                colors[mask] = obj.surface_color(hits[mask])
        return t, labels, colors

    def transformed(self, rotation: np.ndarray, translation: np.ndarray) -> SceneGeometry:
        return SceneGeometry(
            objects=tuple(obj.transformed(rotation, translation) for obj in self.objects)
        )


def ground_truth_maps(
    geometry: SceneGeometry, grid: sg.GridSpec, pose: Pose, background=(0.0, 0.0, 0.0)
):
    """Ray-traced (color (H,W,3), depth (H,W,1), labels (H,W)) for a grid.

    Depth is Euclidean distance from the camera center; misses carry
    infinite depth and label 0.
    """
    height, width = grid.shape
    dirs_world = (sg.grid_directions(grid) @ pose.rotation).reshape(-1, 3)
    origins = np.broadcast_to(pose.translation, dirs_world.shape)
    t, labels, colors = geometry.trace(origins, dirs_world)
    bg = np.broadcast_to(np.asarray(background, dtype=float).reshape(-1), (3,))
    image = np.where(np.isfinite(t)[:, None], colors, bg)
    return (
        image.reshape(height, width, 3),
        t.reshape(height, width, 1),
        labels.reshape(height, width).astype(np.int32),
    )


def analytic_render(
    geometry: SceneGeometry, grid: sg.GridSpec, pose: Pose, background=(0.0, 0.0, 0.0)
) -> np.ndarray:
    return ground_truth_maps(geometry, grid, pose, background)[0]


@dataclass
class Scene:
    """A synthetic scene: splat cloud, optional surfaces, camera layout."""

    name: str
    cloud: GaussianCloud
    geometry: SceneGeometry | None
    view_poses: tuple[Pose, ...]  # input rig (stereo pair)
    eval_poses: tuple[Pose, ...]  # held-out poses for metrics
    near: float
    far: float


def _offset_pose(x: float = 0.0, y: float = 0.0, z: float = 0.0) -> Pose:
    return Pose(rotation=np.eye(3), translation=np.array([x, y, z]))


def _surface_cloud(
    positions: np.ndarray, colors: np.ndarray, sigma: float, opacity: float
) -> GaussianCloud:
    count = positions.shape[0]
    rotations = np.zeros((count, 4))
    rotations[:, 0] = 1.0
    return GaussianCloud(
        positions=positions,
        scales=np.full((count, 3), sigma),
        rotations=rotations,
        opacities=np.full(count, opacity),
        sh=(colors / SH_C0)[:, :, None],
    )


def _orthobasis(direction: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.array([1.0, 0.0, 0.0])
    if abs(direction @ helper) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    b1 = np.cross(direction, helper)
    b1 /= np.linalg.norm(b1)
    return b1, np.cross(direction, b1)


def _shell_scene(seed: int, p: dict) -> Scene:
    surface = ConstantSphere(
        center=np.zeros(3), radius=p["radius"], color=np.asarray(p["color"], dtype=float),
        inside=True,
    )
    dirs = fibonacci_sphere(p["count"])
    positions = dirs * p["radius"]
    colors = np.broadcast_to(surface.color, (positions.shape[0], 3))
    cloud = _surface_cloud(positions, colors, p["sigma"], p["opacity"])
    half_base = p["baseline"] / 2.0
    return Scene(
        name="shell",
        cloud=cloud,
        geometry=SceneGeometry(objects=(surface,)),
        view_poses=(_offset_pose(x=-half_base), _offset_pose(x=half_base)),
        eval_poses=(_offset_pose(0.08, -0.05, 0.06),),
        near=1.0,
        far=8.0,
    )


def _room_scene(seed: int, p: dict) -> Scene:
    room = TexturedRoom(
        half=p["half"], seed=seed,
        frequency=p["noise_frequency"], octaves=p["octaves"],
    )
    k = p["face_resolution"]
    half = room.half
    walls = []
    for axis in range(3):
        ua, ub = (axis + 1) % 3, (axis + 2) % 3
        line_a = half[ua] * ((np.arange(k) + 0.5) * 2.0 / k - 1.0)
        line_b = half[ub] * ((np.arange(k) + 0.5) * 2.0 / k - 1.0)
        a, b = np.meshgrid(line_a, line_b, indexing="ij")
        for sign in (-1.0, 1.0):
            points = np.zeros((k * k, 3))
            points[:, axis] = sign * half[axis]
            points[:, ua] = a.reshape(-1)
            points[:, ub] = b.reshape(-1)
            walls.append(points)
    positions = np.concatenate(walls, axis=0)
    cloud = _surface_cloud(
        positions, room.surface_color(positions), p["sigma"], p["opacity"]
    )
    half_base = p["baseline"] / 2.0
    return Scene(
        name="textured-room",
        cloud=cloud,
        geometry=SceneGeometry(objects=(room,)),
        view_poses=(_offset_pose(z=-half_base), _offset_pose(z=half_base)),
        eval_poses=(_offset_pose(0.0, 1.2, -0.8),),
        near=8.0,
        far=60.0,
    )


def _polar_field_scene(seed: int, p: dict) -> Scene:
    rng = np.random.default_rng(seed)
    theta_c = math.radians(p["center_elevation_deg"])
    cap = math.radians(p["cap_deg"])
    center = sg.spherical_to_direction(np.array(theta_c), np.array(0.0))
    b1, b2 = _orthobasis(center)
    cos_psi = rng.uniform(math.cos(cap), 1.0, p["count"])
    azimuth = rng.uniform(0.0, 2.0 * math.pi, p["count"])
    sin_psi = np.sqrt(1.0 - cos_psi**2)
    dirs = (
        cos_psi[:, None] * center
        + sin_psi[:, None] * (np.cos(azimuth)[:, None] * b1 + np.sin(azimuth)[:, None] * b2)
    )
    positions = dirs * p["radius"]
    colors = np.array([0.95, 0.75, 0.35]) + 0.1 * (
        noise_rgb(positions, seed, octaves=1, frequency=3.0) - 0.5
    )
    cloud = _surface_cloud(positions, colors, p["sigma"], p["opacity"])
    half_base = p["baseline"] / 2.0
    return Scene(
        name="polar-field",
        cloud=cloud,
        geometry=None,
        view_poses=(_offset_pose(x=-half_base), _offset_pose(x=half_base)),
        eval_poses=(_offset_pose(),),
        near=1.0,
        far=8.0,
    )


def _two_objects_scene(seed: int, p: dict) -> Scene:
    sphere_a = TexturedSphere(
        center=np.array([1.2, 0.4, 0.1]), radius=0.5, seed=seed + 1,
        frequency=p["noise_frequency"], octaves=p["octaves"],
    )
    sphere_b = TexturedSphere(
        center=np.array([-0.8, -0.9, -0.2]), radius=0.65, seed=seed + 2,
        frequency=p["noise_frequency"], octaves=p["octaves"],
    )
    clouds = []
    for sphere, count in ((sphere_a, 1500), (sphere_b, 1500)):
        positions = sphere.center + fibonacci_sphere(count) * sphere.radius
        sigma = 0.6 * math.sqrt(4.0 * math.pi * sphere.radius**2 / count)
        clouds.append(
            _surface_cloud(positions, sphere.surface_color(positions), sigma, 0.95)
        )
    half_base = p["baseline"] / 2.0
    return Scene(
        name="two-objects",
        cloud=GaussianCloud.merge(clouds),
        geometry=SceneGeometry(objects=(sphere_a, sphere_b)),
        view_poses=(_offset_pose(x=-half_base), _offset_pose(x=half_base)),
        eval_poses=(_offset_pose(0.0, 0.05, 0.0),),
        near=0.5,
        far=6.0,
    )


_SCENE_DEFAULTS = {
    "shell": dict(
        count=6000, radius=2.0, sigma=0.055, opacity=0.95,
        color=(0.62, 0.34, 0.21), baseline=0.3,
    ),
    "textured-room": dict(
        half=(25.0, 25.0, 38.0), face_resolution=40, sigma=1.1, opacity=0.95,
        noise_frequency=0.26, octaves=3, baseline=1.2,
    ),
    "polar-field": dict(
        count=300, radius=2.0, sigma=0.04, opacity=0.9,
        center_elevation_deg=85.0, cap_deg=2.0, baseline=0.4,
    ),
    "two-objects": dict(noise_frequency=4.0, octaves=2, baseline=0.5),
}

_SCENE_BUILDERS = {
    "shell": _shell_scene,
    "textured-room": _room_scene,
    "polar-field": _polar_field_scene,
    "two-objects": _two_objects_scene,
}


def scene_names() -> list[str]:
    return sorted(_SCENE_BUILDERS)


def make_scene(name: str, seed: int = 0, **overrides) -> Scene:
    """Build a named scene; keyword overrides replace default parameters."""
    if name not in _SCENE_BUILDERS:
        raise ValueError(f"unknown scene {name!r}; choose from {scene_names()}")
    params = dict(_SCENE_DEFAULTS[name])
    unknown = set(overrides) - set(params)
    if unknown:
        raise ValueError(f"unknown scene parameters {sorted(unknown)}")
    params.update(overrides)
    return _SCENE_BUILDERS[name](seed, params)
