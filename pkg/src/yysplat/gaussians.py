"""Gaussian cloud container, pixel-aligned construction, color refinement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sphere_geom as sg
from .io_formats import Pose, as_field_image

# Degree-0 spherical harmonic basis value: a DC coefficient c / SH_C0 renders
# as color c.
SH_C0 = 0.28209479177387814


@dataclass
class GaussianCloud:
    """Struct-of-arrays 3D Gaussian set.

    positions (N, 3) world coordinates; scales (N, 3) positive standard
    deviations along the local axes; rotations (N, 4) unit quaternions in
    (w, x, y, z) order; opacities (N,) in (0, 1]; sh (N, 3, (degree+1)^2)
    spherical-harmonic color coefficients (unclamped linear radiance).
    """

    positions: np.ndarray
    scales: np.ndarray
    rotations: np.ndarray
    opacities: np.ndarray
    sh: np.ndarray

    def __post_init__(self) -> None:
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        n = self.positions.shape[0]
        self.scales = np.asarray(self.scales, dtype=float).reshape(n, 3)
        self.rotations = np.asarray(self.rotations, dtype=float).reshape(n, 4)
        self.opacities = np.asarray(self.opacities, dtype=float).reshape(n)
        sh = np.asarray(self.sh, dtype=float)
        if n:
            sh = sh.reshape(n, 3, -1)
        else:
            # reshape(-1) cannot infer the basis size from an empty array
            sh = sh.reshape(0, 3, sh.shape[-1] if sh.ndim == 3 else 1)
        self.sh = sh
        basis = self.sh.shape[2]
        degree = int(np.sqrt(basis)) - 1
        if (degree + 1) ** 2 != basis:
            raise ValueError("SH coefficient count must be a square")
        for arr in (self.positions, self.scales, self.rotations, self.opacities, self.sh):
            if not np.all(np.isfinite(arr)):
                raise ValueError("cloud arrays must be finite")
        if n:
            if np.any(self.scales <= 0):
                raise ValueError("scales must be positive")
            if np.any(self.opacities <= 0) or np.any(self.opacities > 1):
                raise ValueError("opacities must lie in (0, 1]")
            norms = np.linalg.norm(self.rotations, axis=1)
            err = np.abs(norms - 1.0)
            if np.any(err > 1e-3):
                raise ValueError("quaternions must be unit length")
            fix = err > 1e-6
            if np.any(fix):
                self.rotations[fix] /= norms[fix, None]

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def sh_degree(self) -> int:
        return int(np.sqrt(self.sh.shape[2])) - 1

    def copy(self) -> "GaussianCloud":
        return GaussianCloud(
            self.positions.copy(),
            self.scales.copy(),
            self.rotations.copy(),
            self.opacities.copy(),
            self.sh.copy(),
        )

    @classmethod
    def empty(cls, sh_degree: int = 0) -> "GaussianCloud":
        basis = (sh_degree + 1) ** 2
        return cls(
            np.zeros((0, 3)),
            np.zeros((0, 3)),
            np.zeros((0, 4)),
            np.zeros(0),
            np.zeros((0, 3, basis)),
        )

    @classmethod
    def merge(cls, clouds) -> "GaussianCloud":
        clouds = list(clouds)
        if not clouds:
            raise ValueError("merge requires at least one cloud")
        degrees = {c.sh_degree for c in clouds}
        if len(degrees) != 1:
            raise ValueError("merged clouds must share the SH degree")
        return cls(
            np.concatenate([c.positions for c in clouds]),
            np.concatenate([c.scales for c in clouds]),
            np.concatenate([c.rotations for c in clouds]),
            np.concatenate([c.opacities for c in clouds]),
            np.concatenate([c.sh for c in clouds]),
        )


def quaternion_to_matrix(quats) -> np.ndarray:
    """Rotation matrices (N, 3, 3) from unit quaternions (N, 4), wxyz order."""
    q = np.asarray(quats, dtype=float).reshape(-1, 4)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    mats = np.empty((q.shape[0], 3, 3))
    mats[:, 0, 0] = 1 - 2 * (y * y + z * z)
    mats[:, 0, 1] = 2 * (x * y - w * z)
    mats[:, 0, 2] = 2 * (x * z + w * y)
    mats[:, 1, 0] = 2 * (x * y + w * z)
    mats[:, 1, 1] = 1 - 2 * (x * x + z * z)
    mats[:, 1, 2] = 2 * (y * z - w * x)
    mats[:, 2, 0] = 2 * (x * z - w * y)
    mats[:, 2, 1] = 2 * (y * z + w * x)
    mats[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return mats


def world_covariances(cloud: GaussianCloud) -> np.ndarray:
    """(N, 3, 3) world-frame covariances R diag(s^2) R^T."""
    rot = quaternion_to_matrix(cloud.rotations)
    scaled = rot * (cloud.scales[:, None, :] ** 2)
    return scaled @ np.swapaxes(rot, 1, 2)


def pixel_aligned_cloud(
    img,
    depth,
    grid: sg.GridSpec,
    pose: Pose,
    opacity: float = 0.9,
    scale_factor: float = 1.0,
) -> GaussianCloud:
    """One isotropic Gaussian per pixel at the pixel's ray and depth.

    Means sit at ``camera_center + depth * world_direction``; the isotropic
    scale is ``scale_factor * depth * angular_pixel_step(grid)`` so that
    neighbouring splats abut; colors become degree-0 SH coefficients.

    Raises:
        ValueError: on nonpositive depth or shape mismatches.
    """
    img = as_field_image(img, channels=3)
    depth = np.asarray(depth, dtype=float)
    if depth.ndim == 3 and depth.shape[2] == 1:
        depth = depth[:, :, 0]
    if depth.shape != grid.shape or img.shape[:2] != grid.shape:
        raise ValueError("image and depth must match the grid shape")
    if not np.all(np.isfinite(depth)) or np.any(depth <= 0):
        raise ValueError("depth must be finite and positive")
    if not 0 < opacity <= 1:
        raise ValueError("opacity must lie in (0, 1]")
    dirs_cam = sg.grid_directions(grid).reshape(-1, 3)
    dirs_world = dirs_cam @ pose.rotation
    flat_depth = depth.reshape(-1)
    positions = pose.translation + dirs_world * flat_depth[:, None]
    sigma = scale_factor * flat_depth * sg.angular_pixel_step(grid)
    n = positions.shape[0]
    rotations = np.zeros((n, 4))
    rotations[:, 0] = 1.0
    return GaussianCloud(
        positions=positions,
        scales=np.repeat(sigma[:, None], 3, axis=1),
        rotations=rotations,
        opacities=np.full(n, float(opacity)),
        sh=(img.reshape(-1, 3) / SH_C0)[:, :, None],
    )


# --------------------------------------------------------------------------
# Color refinement.  With geometry and opacity frozen, every rendered pixel is
# an affine function of the DC coefficients, so the mean-squared rendering
# error is an exact quadratic; gradient descent with the row-sum Hessian bound
# as the default step is monotone.


def _build_color_system(cloud, views, pass_height, background, eps_alpha):
    from scipy import sparse

    from .decompose import recompose_operators
    from .rasterizer import rasterize_with_weights

    if len(cloud) == 0:
        raise ValueError("cannot refine an empty cloud")
    if cloud.sh_degree != 0:
        raise ValueError("color refinement expects degree-0 SH clouds")
    views = list(views)
    if not views:
        raise ValueError("refinement requires at least one view")
    bg = np.broadcast_to(np.asarray(background, dtype=float).reshape(-1), (3,))
    systems = []
    for image, pose in views:
        image = as_field_image(image, channels=3)
        height, width = image.shape[:2]
        out_grid = sg.GridSpec.equirect(height)
        if width != out_grid.width:
            raise ValueError("refinement views must be equirect images")
        h_pass = pass_height if pass_height is not None else max(1, height // 2)
        b_yin, b_yang = recompose_operators(h_pass, out_grid)
        total = None
        const = np.zeros((height * width, 3))
        for grid, b_op in (
            (sg.GridSpec.yin(h_pass), b_yin),
            (sg.GridSpec.yang(h_pass), b_yang),
        ):
            out, weights = rasterize_with_weights(
                cloud, grid, pose, background=bg, eps_alpha=eps_alpha
            )
            alpha = out.alpha.reshape(-1)
            valid = alpha >= eps_alpha
            inv_alpha = np.where(valid, 1.0 / np.where(valid, alpha, 1.0), 0.0)
            normalized = sparse.diags(inv_alpha) @ weights
            piece = b_op @ normalized
            total = piece if total is None else total + piece
            const += b_op @ np.where(valid[:, None], 0.0, bg[None, :])
        systems.append((total.tocsr(), const, image.reshape(-1, 3)))
    return systems


def color_refinement_gradient(
    cloud: GaussianCloud,
    views,
    pass_height: int | None = None,
    background=(0.0, 0.0, 0.0),
    eps_alpha: float = 1e-3,
):
    """Mean-squared rendering loss over the views and its analytic gradient
    with respect to the DC coefficients.

    Returns:
        (loss, gradient (N, 3)).
    """
    systems = _build_color_system(cloud, views, pass_height, background, eps_alpha)
    dc = cloud.sh[:, :, 0]
    loss = 0.0
    grad = np.zeros_like(dc)
    for mat, const, ref in systems:
        rendered = SH_C0 * (mat @ dc) + const
        residual = rendered - ref
        scale = 1.0 / (residual.size)
        loss += scale * np.sum(residual**2)
        grad += (2.0 * SH_C0 * scale) * (mat.T @ residual)
    n_views = len(systems)
    return loss / n_views, grad / n_views


def refine_colors(
    cloud: GaussianCloud,
    views,
    iterations: int = 100,
    learning_rate: float | None = None,
    pass_height: int | None = None,
    background=(0.0, 0.0, 0.0),
    eps_alpha: float = 1e-3,
) -> GaussianCloud:
    """Gradient descent on the mean-squared rendering error, DC color only.

    Positions, covariances and opacities are untouched.  ``learning_rate=None``
    selects ``1 / bound`` where ``bound`` is the row-sum bound on the
    quadratic loss's Hessian, which keeps every step non-increasing.
    """
    if iterations < 0:
        raise ValueError("iterations must be non-negative")
    refined = cloud.copy()
    if iterations == 0:
        return refined
    systems = _build_color_system(refined, views, pass_height, background, eps_alpha)
    n_views = len(systems)
    if learning_rate is None:
        bound = np.zeros(len(refined))
        for mat, _, ref in systems:
            scale = 2.0 * SH_C0**2 / (ref.size * n_views)
            col_sums = np.asarray(mat.sum(axis=0)).reshape(-1)
            bound += scale * col_sums
        peak = bound.max() if len(bound) else 0.0
        if peak <= 0.0:
            return refined
        learning_rate = 1.0 / peak
    dc = refined.sh[:, :, 0].copy()
    for _ in range(iterations):
        grad = np.zeros_like(dc)
        for mat, const, ref in systems:
            residual = SH_C0 * (mat @ dc) + const - ref
            grad += (2.0 * SH_C0 / (residual.size * n_views)) * (mat.T @ residual)
        dc -= learning_rate * grad
    refined.sh = dc[:, :, None]
    return refined
