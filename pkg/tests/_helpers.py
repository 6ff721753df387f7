"""Shared builders for the test suite."""

import numpy as np

from yysplat import sphere_geom as sg
from yysplat.gaussians import SH_C0, GaussianCloud
from yysplat.io_formats import Pose


def identity_pose() -> Pose:
    return Pose(rotation=np.eye(3), translation=np.zeros(3))


def smooth_band_limited(grid: sg.GridSpec) -> np.ndarray:
    """Low-order polynomial field in the direction components: smooth on the
    sphere, so resampling loss stays tiny."""
    d = sg.grid_directions(grid)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    r = 0.5 + 0.20 * x + 0.10 * y * z + 0.05 * (x * x - y * y)
    g = 0.5 + 0.15 * z + 0.10 * x * y + 0.05 * z * z * z
    b = 0.5 + 0.18 * y + 0.08 * x * z * z + 0.04 * x * y * z
    return np.stack([r, g, b], axis=-1)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random rotation via QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_cloud(
    rng: np.random.Generator,
    count: int,
    radius_range=(1.5, 4.0),
    scale_range=(0.05, 0.3),
    opacity_range=(0.3, 0.95),
) -> GaussianCloud:
    """Random anisotropic Gaussians scattered on a shell around the origin."""
    dirs = rng.normal(size=(count, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = rng.uniform(*radius_range, count)
    positions = dirs * radii[:, None]
    scales = rng.uniform(*scale_range, (count, 3))
    quats = rng.normal(size=(count, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    opacities = rng.uniform(*opacity_range, count)
    colors = rng.uniform(0.05, 0.95, (count, 3))
    return GaussianCloud(
        positions=positions,
        scales=scales,
        rotations=quats,
        opacities=opacities,
        sh=(colors / SH_C0)[:, :, None],
    )


def constant_color_cloud(positions: np.ndarray, color, sigma: float, opacity: float) -> GaussianCloud:
    count = positions.shape[0]
    colors = np.broadcast_to(np.asarray(color, dtype=float), (count, 3))
    return GaussianCloud(
        positions=np.asarray(positions, dtype=float),
        scales=np.full((count, 3), sigma),
        rotations=np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (count, 1)),
        opacities=np.full(count, opacity),
        sh=(colors / SH_C0)[:, :, None],
    )
