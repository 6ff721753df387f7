"""Omnidirectional 3D Gaussian splatting on Yin-Yang grids.

The pipeline: decompose equirectangular panoramas into the two overlapping
Yin-Yang grids, sphere-sweep stereo features into per-grid cost volumes, lift
winning depths to pixel-aligned Gaussians, render with a two-pass rasterizer
whose per-pass alpha normalization removes polar and seam artifacts, and
optionally refine colors against the input views.
"""

from .decompose import (
    decompose_yinyang,
    recompose_at_directions,
    recompose_weights,
    recompose_yinyang,
)
from .gaussians import (
    SH_C0,
    GaussianCloud,
    color_refinement_gradient,
    pixel_aligned_cloud,
    refine_colors,
    world_covariances,
)
from .io_formats import (
    FormatError,
    Pose,
    read_cloud,
    read_image,
    read_pfm,
    read_pose_file,
    write_cloud,
    write_image,
    write_pfm,
    write_pose_file,
)
from .metrics import psnr, ssim
from .rasterizer import (
    RenderOutput,
    oracle_render,
    rasterize,
    rasterize_with_weights,
    render_yinyang,
    render_yinyang_passes,
)
from .scene_synth import Scene, analytic_render, ground_truth_maps, make_scene, scene_names
from .sphere_geom import (
    M_YANG,
    GridFamily,
    GridSpec,
    angular_pixel_step,
    cubemap_rig,
    direction_to_pixel,
    grid_directions,
    pixel_to_direction,
    spherical_to_direction,
    yang_contains,
    yin_contains,
)
from .sweep import (
    CostVolume,
    DepthCandidates,
    blend_warped,
    cost_volume,
    depth_candidates,
    depth_from_cost,
    extract_features,
    match_segments,
    paired_cost_volume,
    warp_feature,
)

__all__ = [
    "CostVolume",
    "DepthCandidates",
    "FormatError",
    "GaussianCloud",
    "GridFamily",
    "GridSpec",
    "M_YANG",
    "Pose",
    "RenderOutput",
    "SH_C0",
    "Scene",
    "analytic_render",
    "angular_pixel_step",
    "blend_warped",
    "color_refinement_gradient",
    "cost_volume",
    "cubemap_rig",
    "decompose_yinyang",
    "depth_candidates",
    "depth_from_cost",
    "direction_to_pixel",
    "extract_features",
    "grid_directions",
    "ground_truth_maps",
    "make_scene",
    "match_segments",
    "oracle_render",
    "paired_cost_volume",
    "pixel_aligned_cloud",
    "pixel_to_direction",
    "psnr",
    "rasterize",
    "rasterize_with_weights",
    "read_cloud",
    "read_image",
    "read_pfm",
    "read_pose_file",
    "recompose_at_directions",
    "recompose_weights",
    "recompose_yinyang",
    "refine_colors",
    "render_yinyang",
    "render_yinyang_passes",
    "scene_names",
    "spherical_to_direction",
    "ssim",
    "warp_feature",
    "world_covariances",
    "write_cloud",
    "write_image",
    "write_pfm",
    "write_pose_file",
    "yang_contains",
    "yin_contains",
]

__version__ = "0.1.0"
