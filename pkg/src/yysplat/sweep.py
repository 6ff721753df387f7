"""Sphere-sweep stereo on Yin/Yang grids.

Hand-crafted per-pixel descriptors stand in for a learned encoder: for every
offset in a square window the descriptor stacks the mean-subtracted grayscale
value and the two image gradients, L2-normalized per pixel.  Source features
are warped into a target grid along a ladder of depth candidates, warps from
the two source grids are mask-blended, and the dot product with the target's
own descriptors gives a matching score per candidate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import sphere_geom as sg
from .io_formats import Pose
from .sampling import bilinear_sample

DEFAULT_DEPTH_COUNT = 64
DEFAULT_NEAR = 1.0
DEFAULT_FAR = 100.0

_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class DepthCandidates:
    """Depth ladder sampled uniformly in inverse depth, near to far."""

    near: float
    far: float
    values: np.ndarray

    def __len__(self) -> int:
        return self.values.shape[0]


def depth_candidates(
    near: float = DEFAULT_NEAR,
    far: float = DEFAULT_FAR,
    count: int = DEFAULT_DEPTH_COUNT,
) -> DepthCandidates:
    if not 0 < near < far:
        raise ValueError("need 0 < near < far")
    if count < 2:
        raise ValueError("need at least two depth candidates")
    steps = np.arange(count) / (count - 1)
    values = 1.0 / (1.0 / near + steps * (1.0 / far - 1.0 / near))
    values[0] = near
    values[-1] = far
    return DepthCandidates(near=float(near), far=float(far), values=values)


def _grayscale(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=float)
    if image.ndim == 3 and image.shape[2] == 3:
        return image @ _LUMA
    if image.ndim == 3 and image.shape[2] == 1:
        return image[:, :, 0]
    if image.ndim == 2:
        return image
    raise ValueError(f"expected 1- or 3-channel image, got shape {image.shape}")


def _central_diff(gray: np.ndarray, axis: int) -> np.ndarray:
    forward = np.roll(gray, -1, axis=axis)
    backward = np.roll(gray, 1, axis=axis)
    if axis == 1:
        forward[:, -1] = gray[:, -1]
        backward[:, 0] = gray[:, 0]
    else:
        forward[-1, :] = gray[-1, :]
        backward[0, :] = gray[0, :]
    return (forward - backward) / 2.0


def _window_stack(plane: np.ndarray, window: int) -> np.ndarray:
    """All window-shifted copies of a plane, edge-clamped, (H, W, window**2)."""
    half = window // 2
    padded = np.pad(plane, half, mode="edge")
    height, width = plane.shape
    shifts = [
        padded[dy : dy + height, dx : dx + width]
        for dy in range(window)
        for dx in range(window)
    ]
    return np.stack(shifts, axis=2)


def extract_features(image: np.ndarray, window: int = 5) -> np.ndarray:
    """Per-pixel descriptors, (H, W, 3 * window**2) float32, unit L2 norm."""
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be odd and positive")
    gray = _grayscale(image)
    intensities = _window_stack(gray, window)
    intensities = intensities - intensities.mean(axis=2, keepdims=True)
    grad_x = _window_stack(_central_diff(gray, axis=1), window)
    grad_y = _window_stack(_central_diff(gray, axis=0), window)
    features = np.concatenate([intensities, grad_x, grad_y], axis=2)
    norms = np.linalg.norm(features, axis=2, keepdims=True)
    features = np.divide(features, norms, out=np.zeros_like(features), where=norms > 0)
    return features.astype(np.float32)


def _require_yinyang(grid: sg.GridSpec, role: str) -> None:
    if grid.family not in (sg.GridFamily.YIN, sg.GridFamily.YANG):
        raise ValueError(f"{role} grid must be a Yin or Yang grid, got {grid.family.name}")


def _sweep_geometry(
    target_grid: sg.GridSpec, target_pose: Pose, source_pose: Pose
) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel source-frame ray origins and directions for the sweep.

    A target pixel at depth d sits at ``base + d * dirs`` in the source
    camera frame, so each candidate costs one multiply-add.
    """
    dirs_world = sg.grid_directions(target_grid) @ target_pose.rotation
    dirs_source = dirs_world @ source_pose.rotation.T
    base = source_pose.world_to_camera(target_pose.translation[None, :])[0]
    return base, dirs_source


def _warp_one_depth(
    source_feat: np.ndarray,
    source_grid: sg.GridSpec,
    base: np.ndarray,
    dirs_source: np.ndarray,
    depth: float,
) -> tuple[np.ndarray, np.ndarray]:
    points = base + depth * dirs_source
    u, v, inside = sg.direction_to_pixel(source_grid, points)
    mask = inside & (np.einsum("hwi,hwi->hw", points, points) > 1e-12)
    warped = bilinear_sample(source_feat, u, v)
    warped[~mask] = 0.0
    return warped, mask


def warp_feature(
    source_feat: np.ndarray,
    source_grid: sg.GridSpec,
    target_grid: sg.GridSpec,
    target_pose: Pose,
    source_pose: Pose,
    candidates: DepthCandidates,
) -> tuple[np.ndarray, np.ndarray]:
    """Source features resampled onto target pixels per depth candidate.

    Returns ``(warped, mask)`` with shapes (H, W, F, D) float32 and
    (H, W, D) bool; masked-out samples are zero.
    """
    _require_yinyang(source_grid, "source")
    _require_yinyang(target_grid, "target")
    if source_feat.shape[:2] != source_grid.shape:
        raise ValueError("feature map does not match the source grid")
    base, dirs_source = _sweep_geometry(target_grid, target_pose, source_pose)
    height, width = target_grid.shape
    depth_count = len(candidates)
    warped = np.empty(
        (height, width, source_feat.shape[2], depth_count), dtype=np.float32
    )
    mask = np.empty((height, width, depth_count), dtype=bool)
    for k, depth in enumerate(candidates.values):
        sample, valid = _warp_one_depth(
            source_feat, source_grid, base, dirs_source, depth
        )
        warped[:, :, :, k] = sample
        mask[:, :, k] = valid
    return warped, mask


def blend_warped(
    warped_a: np.ndarray,
    mask_a: np.ndarray,
    warped_b: np.ndarray,
    mask_b: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Mask-weighted average of two warped stacks and the coverage count."""
    mask_sum = mask_a.astype(np.int32) + mask_b.astype(np.int32)
    total = warped_a * mask_a[:, :, None, :] + warped_b * mask_b[:, :, None, :]
    denom = np.maximum(mask_sum, 1)[:, :, None, :]
    return (total / denom).astype(np.float32), mask_sum


@dataclass(frozen=True)
class CostVolume:
    """Per-pixel matching scores over the depth ladder for one grid."""

    grid: sg.GridSpec
    candidates: DepthCandidates
    scores: np.ndarray  # (H, W, D)


def cost_volume(
    target_feat: np.ndarray,
    warped: np.ndarray,
    grid: sg.GridSpec,
    candidates: DepthCandidates,
) -> CostVolume:
    """Correlation of target descriptors against a warped stack, / sqrt(F)."""
    feat_dim = target_feat.shape[2]
    scores = np.einsum(
        "hwf,hwfd->hwd", target_feat.astype(np.float64), warped.astype(np.float64)
    ) / math.sqrt(feat_dim)
    return CostVolume(grid=grid, candidates=candidates, scores=scores)


def paired_cost_volume(
    target_feat: np.ndarray,
    target_grid: sg.GridSpec,
    target_pose: Pose,
    source_feats: tuple[np.ndarray, ...],
    source_grids: tuple[sg.GridSpec, ...],
    source_pose: Pose,
    candidates: DepthCandidates,
    chunk_size: int = 8,
) -> CostVolume:
    """Cost volume against several source grids of one view, fused and chunked.

    Equivalent to warping each source grid with ``warp_feature``, blending,
    and calling ``cost_volume``, but only ``chunk_size`` depth slices of the
    warped stacks are alive at a time.
    """
    if len(source_feats) != len(source_grids) or not source_feats:
        raise ValueError("need matching, non-empty source features and grids")
    _require_yinyang(target_grid, "target")
    if target_feat.shape[:2] != target_grid.shape:
        raise ValueError("feature map does not match the target grid")
    for feat, grid in zip(source_feats, source_grids):
        _require_yinyang(grid, "source")
        if feat.shape[:2] != grid.shape:
            raise ValueError("feature map does not match its source grid")
    base, dirs_source_world = _sweep_geometry(target_grid, target_pose, source_pose)
    height, width = target_grid.shape
    feat_dim = target_feat.shape[2]
    depth_count = len(candidates)
    scores = np.zeros((height, width, depth_count))
    target64 = target_feat.astype(np.float64)
    for start in range(0, depth_count, chunk_size):
        stop = min(start + chunk_size, depth_count)
        total = np.zeros((height, width, feat_dim, stop - start))
        count = np.zeros((height, width, stop - start))
        for feat, grid in zip(source_feats, source_grids):
            for k in range(start, stop):
                sample, valid = _warp_one_depth(
                    feat, grid, base, dirs_source_world, candidates.values[k]
                )
                total[:, :, :, k - start] += sample * valid[:, :, None]
                count[:, :, k - start] += valid
        blended = total / np.maximum(count, 1)[:, :, None, :]
        scores[:, :, start:stop] = np.einsum("hwf,hwfd->hwd", target64, blended)
    return CostVolume(
        grid=target_grid, candidates=candidates, scores=scores / math.sqrt(feat_dim)
    )


def depth_from_cost(volume: CostVolume) -> np.ndarray:
    """Winning candidate depth per pixel, (H, W, 1); ties pick the nearer."""
    best = np.argmax(volume.scores, axis=2)
    return volume.candidates.values[best][:, :, None]


def match_segments(
    volume: CostVolume,
    source_labels: np.ndarray,
    target_labels: np.ndarray,
    source_pose: Pose,
    target_pose: Pose,
    target_grid: sg.GridSpec,
) -> dict[int, int]:
    """Map source segment ids to target segment ids via swept depth.

    Every labeled source pixel is lifted to 3D at its winning depth and
    dropped into the target grid; each source segment adopts the target label
    that receives the most of its pixels.  Label 0 is background on both
    sides.  Segments whose pixels all miss the target grid are left out.
    Plurality ties resolve to the smaller target label.
    """
    source_labels = np.asarray(source_labels)
    target_labels = np.asarray(target_labels)
    if source_labels.shape != volume.grid.shape:
        raise ValueError("source labels do not match the cost volume grid")
    if target_labels.shape != target_grid.shape:
        raise ValueError("target labels do not match the target grid")
    if source_labels.min() < 0 or target_labels.min() < 0:
        raise ValueError("segment labels must be non-negative")

    depth = depth_from_cost(volume)[:, :, 0]
    dirs_world = sg.grid_directions(volume.grid) @ source_pose.rotation
    points_world = source_pose.translation + dirs_world * depth[:, :, None]
    points_target = target_pose.world_to_camera(points_world.reshape(-1, 3))
    u, v, inside = sg.direction_to_pixel(target_grid, points_target)
    inside &= np.einsum("ij,ij->i", points_target, points_target) > 1e-12

    labels_flat = source_labels.reshape(-1)
    votes_ok = inside & (labels_flat > 0)
    cols = np.clip(np.floor(u[votes_ok]).astype(int), 0, target_grid.width - 1)
    rows = np.clip(np.floor(v[votes_ok]).astype(int), 0, target_grid.height - 1)
    landed = target_labels[rows, cols]

    matches: dict[int, int] = {}
    for label in np.unique(labels_flat[labels_flat > 0]):
        counts = np.bincount(landed[labels_flat[votes_ok] == label])
        if counts.size == 0:
            continue
        matches[int(label)] = int(np.argmax(counts))
    return matches
