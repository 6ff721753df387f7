"""Resampling between equirectangular rasters and the Yin/Yang grid pair.

Decomposition samples an equirect image onto both grids (azimuth wraps while
sampling the source).  Recomposition blends the two grid images back onto an
equirect raster: in the overlap, per-pixel weights are proportional to each
grid's angular distance to its own boundary and sum to one; outside a grid's
bounds its weight is zero.  Yin/Yang images are sampled with clamped (never
wrapped) bilinear taps.
"""

from __future__ import annotations

import numpy as np

from . import sphere_geom as sg
from .io_formats import as_field_image
from .sampling import bilinear_sample, bilinear_taps


def _check_equirect_input(img: np.ndarray) -> sg.GridSpec:
    height, width = img.shape[:2]
    if height < 2 or width < 4:
        raise ValueError("equirect input must be at least 2 x 4")
    if width != 2 * height:
        raise ValueError("equirect input requires width == 2 * height")
    return sg.GridSpec.equirect(height)


def decompose_yinyang(
    img, out_height: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Resample an equirect image onto the Yin and Yang grids.

    Args:
        img: (H, 2H, C) equirect image.
        out_height: output grid height; defaults to H // 2.

    Returns:
        (yin, yang) images of shape (out_height, 3 * out_height, C).
    """
    img = as_field_image(img)
    src = _check_equirect_input(img)
    if out_height is None:
        out_height = src.height // 2
    if out_height < 1:
        raise ValueError("out_height must be positive")
    outputs = []
    for grid in (sg.GridSpec.yin(out_height), sg.GridSpec.yang(out_height)):
        dirs = sg.grid_directions(grid)
        u, v, _ = sg.direction_to_pixel(src, dirs)
        outputs.append(bilinear_sample(img, u, v, wrap_u=True))
    return outputs[0], outputs[1]


def recompose_weights(dirs) -> tuple[np.ndarray, np.ndarray]:
    """Per-direction blend weights (w_yin, w_yang); they sum to one.

    Weights are proportional to the angular distance from the direction to
    each covering grid's boundary, zero for a grid that does not contain the
    direction, and split evenly in the measure-zero case of lying exactly on
    both boundaries.
    """
    d = np.asarray(dirs, dtype=float)
    theta, phi = sg.direction_to_spherical(d)
    theta_g, phi_g = sg.direction_to_spherical(sg.yang_transform(d))
    in_yin = sg.yin_contains(theta, phi)
    in_yang = sg.yin_contains(theta_g, phi_g)
    if not np.all(in_yin | in_yang):
        raise AssertionError("direction not covered by either grid")
    dist_yin = np.where(in_yin, sg.yin_boundary_distance(theta, phi), 0.0)
    dist_yang = np.where(in_yang, sg.yin_boundary_distance(theta_g, phi_g), 0.0)
    total = dist_yin + dist_yang
    both_edge = (total == 0.0) & in_yin & in_yang
    dist_yin = np.where(both_edge, 0.5, dist_yin)
    dist_yang = np.where(both_edge, 0.5, dist_yang)
    total = dist_yin + dist_yang
    only = total == 0.0
    w_yin = np.where(only, in_yin, dist_yin / np.where(total == 0, 1.0, total))
    w_yang = np.where(only, in_yang, dist_yang / np.where(total == 0, 1.0, total))
    return w_yin, w_yang


def recompose_at_directions(yin, yang, dirs) -> np.ndarray:
    """Blend Yin/Yang images at arbitrary directions; returns (..., C)."""
    yin = as_field_image(yin)
    yang = as_field_image(yang)
    if yin.shape != yang.shape:
        raise ValueError("yin and yang images must have the same shape")
    height = yin.shape[0]
    yin_grid = sg.GridSpec.yin(height)
    yang_grid = sg.GridSpec.yang(height)
    w_yin, w_yang = recompose_weights(dirs)
    u_n, v_n, _ = sg.direction_to_pixel(yin_grid, dirs)
    u_e, v_e, _ = sg.direction_to_pixel(yang_grid, dirs)
    sample_yin = bilinear_sample(yin, u_n, v_n)
    sample_yang = bilinear_sample(yang, u_e, v_e)
    # Single-coverage pixels take their grid's sample bit-exactly; the overlap
    # uses the incremental blend so equal samples also pass through exactly.
    blend = sample_yang + w_yin[..., None] * (sample_yin - sample_yang)
    blend = np.where(w_yin[..., None] == 1.0, sample_yin, blend)
    return np.where(w_yang[..., None] == 1.0, sample_yang, blend)


def recompose_yinyang(yin, yang, out_grid: sg.GridSpec) -> np.ndarray:
    """Blend the two grid images onto an equirect raster."""
    if out_grid.family is not sg.GridFamily.EQUIRECT:
        raise ValueError("recompose output grid must be equirect")
    return recompose_at_directions(yin, yang, sg.grid_directions(out_grid))


def recompose_operators(pass_height: int, out_grid: sg.GridSpec):
    """Sparse matrices (B_yin, B_yang) with recompose(yin, yang) flattened as
    ``B_yin @ yin.reshape(P, C) + B_yang @ yang.reshape(P, C)``.

    Rows follow row-major output pixels; used by color refinement, which needs
    the recompose step as an explicit linear map.
    """
    from scipy import sparse

    if out_grid.family is not sg.GridFamily.EQUIRECT:
        raise ValueError("recompose output grid must be equirect")
    dirs = sg.grid_directions(out_grid).reshape(-1, 3)
    n_out = dirs.shape[0]
    w_yin, w_yang = recompose_weights(dirs)
    operators = []
    for family, weight in (
        (sg.GridSpec.yin(pass_height), w_yin),
        (sg.GridSpec.yang(pass_height), w_yang),
    ):
        u, v, _ = sg.direction_to_pixel(family, dirs)
        x0, x1, y0, y1, fx, fy = bilinear_taps(
            u, v, family.width, family.height, wrap_u=False
        )
        rows = np.tile(np.arange(n_out), 4)
        cols = np.concatenate(
            [
                y0 * family.width + x0,
                y0 * family.width + x1,
                y1 * family.width + x0,
                y1 * family.width + x1,
            ]
        )
        vals = np.concatenate(
            [
                weight * (1 - fx) * (1 - fy),
                weight * fx * (1 - fy),
                weight * (1 - fx) * fy,
                weight * fx * fy,
            ]
        )
        keep = vals != 0.0
        mat = sparse.coo_matrix(
            (vals[keep], (rows[keep], cols[keep])),
            shape=(n_out, family.height * family.width),
        )
        operators.append(mat.tocsr())
    return operators[0], operators[1]
