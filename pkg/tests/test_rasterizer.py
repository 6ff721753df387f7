"""Splatting: projection, compositing, oracle agreement, two-pass rendering."""

import numpy as np
import pytest

from yysplat import sphere_geom as sg
from yysplat.gaussians import SH_C0, GaussianCloud
from yysplat.io_formats import Pose
from yysplat.metrics import psnr
from yysplat.rasterizer import (
    eval_sh_colors,
    oracle_render,
    rasterize,
    rasterize_with_weights,
    render_yinyang,
    render_yinyang_passes,
)

from _helpers import constant_color_cloud, identity_pose, random_cloud


def single_gaussian(direction, distance=2.0, sigma=0.05, opacity=0.6, color=(0.5, 0.5, 0.5)):
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    return constant_color_cloud(
        direction[None, :] * distance, color, sigma=sigma, opacity=opacity
    )


# --------------------------------------------------------------------------
# eval_sh_colors


def test_sh_degree_zero_scales_dc():
    sh = np.zeros((2, 3, 1))
    sh[0, :, 0] = [1.0, 2.0, 3.0]
    sh[1, :, 0] = [-1.0, 0.0, 0.5]
    dirs = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    colors = eval_sh_colors(sh, dirs)
    assert np.allclose(colors, SH_C0 * sh[:, :, 0], atol=1e-12)


def test_sh_degree_one_along_z():
    sh = np.zeros((1, 3, 4))
    sh[0, 0, 0] = 2.0
    sh[0, 0, 2] = 1.0  # the z-aligned first-order band
    colors = eval_sh_colors(sh, np.array([[0.0, 0.0, 1.0]]))
    c1 = 0.4886025119029199
    assert colors[0, 0] == pytest.approx(SH_C0 * 2.0 + c1 * 1.0, rel=1e-12)
    assert colors[0, 1] == 0.0 and colors[0, 2] == 0.0


def test_sh_rejects_unsupported_degree():
    with pytest.raises(ValueError):
        eval_sh_colors(np.zeros((1, 3, 25)), np.array([[0.0, 0.0, 1.0]]))


# --------------------------------------------------------------------------
# rasterize basics


def test_empty_cloud_renders_background():
    grid = sg.GridSpec.equirect(8)
    bg = (0.2, 0.4, 0.6)
    out = rasterize(GaussianCloud.empty(), grid, identity_pose(), background=bg)
    assert np.all(out.alpha == 0.0)
    assert np.allclose(out.image, np.asarray(bg), atol=1e-12)
    oracle = oracle_render(GaussianCloud.empty(), grid, identity_pose(), background=bg)
    assert np.array_equal(out.image, oracle.image)
    assert np.array_equal(out.alpha, oracle.alpha)


def test_single_gaussian_centers_on_its_direction():
    grid = sg.GridSpec.equirect(64)
    out = rasterize(single_gaussian([1.0, 0.0, 0.0]), grid, identity_pose())
    peak = np.unravel_index(np.argmax(out.alpha[:, :, 0]), grid.shape)
    # (theta=0, phi=0) projects to continuous pixel (64.0, 32.0).
    assert abs(peak[1] + 0.5 - 64.0) <= 0.5
    assert abs(peak[0] + 0.5 - 32.0) <= 0.5


def test_normalization_arithmetic_exact():
    grid = sg.GridSpec.equirect(16)
    direction = sg.pixel_to_direction(grid, 20, 10)
    cloud = single_gaussian(direction, distance=2.0, opacity=0.6, color=(0.5, 0.5, 0.5))
    out = rasterize(cloud, grid, identity_pose())
    assert abs(out.color[10, 20, 0] - 0.3) <= 1e-12
    assert abs(out.alpha[10, 20, 0] - 0.6) <= 1e-12
    assert abs(out.image[10, 20, 0] - 0.5) <= 1e-12


def test_low_alpha_pixels_take_background():
    grid = sg.GridSpec.equirect(16)
    bg = (0.9, 0.1, 0.2)
    cloud = single_gaussian([1.0, 0.0, 0.0], sigma=0.01)
    out = rasterize(cloud, grid, identity_pose(), background=bg)
    far_pixel = out.image[0, 0]
    assert out.alpha[0, 0, 0] < 1e-3
    assert np.array_equal(far_pixel, np.asarray(bg))


def test_seam_crossing_splat_covers_both_sides():
    grid = sg.GridSpec.equirect(32)
    cloud = single_gaussian([-1.0, 0.0, 0.0], sigma=0.15)
    out = rasterize(cloud, grid, identity_pose())
    row = 16
    assert out.alpha[row, 0, 0] > 1e-3
    assert out.alpha[row, grid.width - 1, 0] > 1e-3


def test_opacity_clamp_keeps_alpha_below_one():
    grid = sg.GridSpec.equirect(16)
    direction = sg.pixel_to_direction(grid, 16, 8)
    stack = [
        single_gaussian(direction, distance=d, sigma=0.3, opacity=1.0)
        for d in (1.0, 1.5, 2.0, 2.5)
    ]
    cloud = GaussianCloud.merge(stack)
    out = rasterize(cloud, grid, identity_pose())
    assert np.max(out.alpha) <= 1.0 + 1e-12
    oracle = oracle_render(cloud, grid, identity_pose())
    assert np.max(oracle.alpha) <= 1.0 + 1e-12


# --------------------------------------------------------------------------
# oracle agreement


def test_rasterize_matches_oracle_on_random_scene():
    rng = np.random.default_rng(0)
    cloud = random_cloud(rng, 50)
    grid = sg.GridSpec.equirect(32)
    pose = identity_pose()
    fast = rasterize(cloud, grid, pose)
    slow = oracle_render(cloud, grid, pose)
    assert np.max(np.abs(fast.image - slow.image)) <= 1e-4
    assert np.max(np.abs(fast.alpha - slow.alpha)) <= 1e-4


def test_rasterize_without_culling_matches_oracle_tightly():
    rng = np.random.default_rng(1)
    cloud = random_cloud(rng, 20)
    grid = sg.GridSpec.equirect(16)
    pose = identity_pose()
    fast = rasterize(cloud, grid, pose, cull=False, early_stop=0.0)
    slow = oracle_render(cloud, grid, pose)
    assert np.max(np.abs(fast.image - slow.image)) <= 1e-6
    assert np.max(np.abs(fast.alpha - slow.alpha)) <= 1e-6


def test_oracle_agreement_on_yin_and_yang_grids():
    rng = np.random.default_rng(2)
    cloud = random_cloud(rng, 30)
    pose = identity_pose()
    for grid in (sg.GridSpec.yin(16), sg.GridSpec.yang(16)):
        fast = rasterize(cloud, grid, pose)
        slow = oracle_render(cloud, grid, pose)
        assert np.max(np.abs(fast.image - slow.image)) <= 1e-4


def test_oracle_bit_stable_across_runs():
    rng = np.random.default_rng(3)
    cloud = random_cloud(rng, 15)
    grid = sg.GridSpec.equirect(12)
    first = oracle_render(cloud, grid, identity_pose())
    second = oracle_render(cloud, grid, identity_pose())
    assert np.array_equal(first.image, second.image)
    assert np.array_equal(first.color, second.color)
    assert np.array_equal(first.alpha, second.alpha)


def test_oracle_cube_face_center_peak():
    from yysplat.sphere_geom import cubemap_rig

    rig = cubemap_rig(17)
    grid, pose = rig[4]  # the +z face
    cloud = single_gaussian([0.0, 0.0, 1.0], sigma=0.08, opacity=0.9)
    out = oracle_render(cloud, grid, pose)
    peak = np.unravel_index(np.argmax(out.alpha[:, :, 0]), grid.shape)
    assert peak == (8, 8)


# --------------------------------------------------------------------------
# compositing invariants


def test_alpha_monotone_under_added_gaussian():
    rng = np.random.default_rng(4)
    base = random_cloud(rng, 12)
    extra = random_cloud(rng, 1)
    merged = GaussianCloud.merge([base, extra])
    grid = sg.GridSpec.equirect(16)
    before = oracle_render(base, grid, identity_pose()).alpha
    after = oracle_render(merged, grid, identity_pose()).alpha
    assert np.all(after >= before - 1e-12)
    fast_before = rasterize(base, grid, identity_pose()).alpha
    fast_after = rasterize(merged, grid, identity_pose()).alpha
    assert np.all(fast_after >= fast_before - 1e-4)


def test_input_permutation_invariance():
    rng = np.random.default_rng(5)
    cloud = random_cloud(rng, 25)
    order = rng.permutation(25)
    shuffled = GaussianCloud(
        cloud.positions[order], cloud.scales[order], cloud.rotations[order],
        cloud.opacities[order], cloud.sh[order],
    )
    grid = sg.GridSpec.equirect(16)
    a = rasterize(cloud, grid, identity_pose())
    b = rasterize(shuffled, grid, identity_pose())
    assert np.max(np.abs(a.image - b.image)) <= 1e-6
    assert np.max(np.abs(a.alpha - b.alpha)) <= 1e-6


def test_tile_size_invariance():
    rng = np.random.default_rng(6)
    cloud = random_cloud(rng, 25)
    grid = sg.GridSpec.equirect(16)
    base = rasterize(cloud, grid, identity_pose(), tile_size=16)
    for tile in (4, 8, 33):
        other = rasterize(cloud, grid, identity_pose(), tile_size=tile)
        assert np.max(np.abs(base.image - other.image)) <= 1e-12


def test_thread_count_invariance():
    rng = np.random.default_rng(7)
    cloud = random_cloud(rng, 25)
    grid = sg.GridSpec.equirect(16)
    single = rasterize(cloud, grid, identity_pose(), threads=1)
    multi = rasterize(cloud, grid, identity_pose(), threads=4)
    assert np.array_equal(single.image, multi.image)
    assert np.array_equal(single.alpha, multi.alpha)


def test_weights_reproduce_color_and_alpha():
    rng = np.random.default_rng(8)
    cloud = random_cloud(rng, 15)
    grid = sg.GridSpec.equirect(12)
    out, weights = rasterize_with_weights(cloud, grid, identity_pose())
    colors = SH_C0 * cloud.sh[:, :, 0]
    recomposed = (weights @ colors).reshape(out.color.shape)
    assert np.max(np.abs(recomposed - out.color)) <= 1e-9
    row_alpha = np.asarray(weights.sum(axis=1)).reshape(out.alpha.shape)
    assert np.max(np.abs(row_alpha - out.alpha)) <= 1e-9


# --------------------------------------------------------------------------
# two-pass rendering


def yin_only_cloud(rng, count=200):
    """Random splats confined to a 20-degree cap around +x: inside Yin,
    invisible to Yang even with 3-sigma inflation."""
    axis = np.array([1.0, 0.0, 0.0])
    tangent = rng.normal(size=(count, 3))
    tangent -= np.outer(tangent @ axis, axis)
    tangent /= np.linalg.norm(tangent, axis=1, keepdims=True)
    angles = rng.uniform(0.0, np.radians(20.0), count)
    dirs = np.cos(angles)[:, None] * axis + np.sin(angles)[:, None] * tangent
    radii = rng.uniform(1.8, 2.2, count)
    return constant_color_cloud(
        dirs * radii[:, None], (0.6, 0.4, 0.3), sigma=0.05, opacity=0.9
    )


def test_render_yinyang_matches_direct_equirect_on_yin_only_scene():
    rng = np.random.default_rng(9)
    cloud = yin_only_cloud(rng)
    out_grid = sg.GridSpec.equirect(64)
    pose = identity_pose()
    two_pass = render_yinyang(cloud, pose, out_grid)
    direct = rasterize(cloud, out_grid, pose)
    assert psnr(two_pass, direct.image) >= 40.0


def test_render_yinyang_passes_shapes_and_types():
    rng = np.random.default_rng(10)
    cloud = random_cloud(rng, 10)
    yin, yang = render_yinyang_passes(cloud, identity_pose(), pass_height=8)
    assert yin.image.shape == (8, 24, 3)
    assert yang.image.shape == (8, 24, 3)
    assert yin.alpha.shape == (8, 24, 1)
    image = render_yinyang(cloud, identity_pose(), sg.GridSpec.equirect(16))
    assert image.shape == (16, 32, 3)
    assert np.all(np.isfinite(image))


def test_render_yinyang_rejects_non_equirect_output():
    rng = np.random.default_rng(11)
    cloud = random_cloud(rng, 3)
    with pytest.raises(ValueError, match="equirect"):
        render_yinyang(cloud, identity_pose(), sg.GridSpec.yin(8))


def test_polar_scene_top_band_coverage():
    from yysplat.scene_synth import make_scene

    scene = make_scene("polar-field", seed=0)
    height = 64
    out_grid = sg.GridSpec.equirect(height)
    pose = scene.view_poses[0]
    band = max(1, round(0.1 * height))

    direct = rasterize(scene.cloud, out_grid, pose)
    direct_holes = int(np.sum(direct.alpha[:band, :, 0] < 1e-3))

    yin, yang = render_yinyang_passes(scene.cloud, pose, height // 2)
    from yysplat.decompose import recompose_weights
    from yysplat.sampling import bilinear_sample

    dirs = sg.grid_directions(out_grid)[:band]
    w_yin, w_yang = recompose_weights(dirs)
    u_n, v_n, _ = sg.direction_to_pixel(sg.GridSpec.yin(height // 2), dirs)
    u_e, v_e, _ = sg.direction_to_pixel(sg.GridSpec.yang(height // 2), dirs)
    alpha = (
        w_yin * bilinear_sample(yin.alpha, u_n, v_n)[..., 0]
        + w_yang * bilinear_sample(yang.alpha, u_e, v_e)[..., 0]
    )
    two_pass_holes = int(np.sum(alpha < 1e-3))
    assert two_pass_holes < direct_holes
