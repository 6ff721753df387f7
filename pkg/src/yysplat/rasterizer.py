"""Front-to-back alpha splatting onto spherical grids, plus a slow reference.

Shared mathematical model (both the tiled fast path and ``oracle_render``):

* Gaussians are transformed to the camera frame, projected to continuous
  pixel coordinates, and given a 2x2 image-space covariance
  ``J Sigma_cam J^T + 0.3 I`` built from the local projection Jacobian.
* A splat contributes ``a = min(opacity * exp(-q/2), 0.999)`` where
  ``q = delta^T Sigma2^{-1} delta`` and only while ``q <= 9`` (the 3-sigma
  support ellipse); azimuthal pixel offsets wrap with the grid's period.
* Splats composite front to back in order of Euclidean camera distance with
  stable index tie-breaks: ``V += T a c``, ``A += T a``, ``T *= 1 - a``.
* The fast path culls splats whose support misses the raster, buckets them
  into 16x16 tiles, and stops a pixel once its transmittance drops below
  ``early_stop``; the reference path evaluates every splat at every pixel
  with no early-out.  Their outputs agree to the early-out bound.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import sphere_geom as sg
from .decompose import recompose_yinyang
from .gaussians import SH_C0, GaussianCloud, world_covariances
from .io_formats import Pose

COV_REGULARIZATION = 0.3  # px^2 added to the diagonal of every 2D covariance
ALPHA_CLAMP = 0.999
SUPPORT_QMAX = 9.0  # 3-sigma ellipse
DEFAULT_EARLY_STOP = 1e-4
DEFAULT_EPS_ALPHA = 1e-3

_SH_C1 = 0.4886025119029199
_SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
_SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)


@dataclass
class RenderOutput:
    """Premultiplied color, accumulated alpha, and the normalized image."""

    color: np.ndarray  # (H, W, 3) premultiplied accumulation
    alpha: np.ndarray  # (H, W, 1)
    image: np.ndarray  # (H, W, 3); background where alpha < eps_alpha


def eval_sh_colors(sh: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Linear (unclamped) RGB from SH coefficients along view directions."""
    basis = sh.shape[2]
    degree = int(math.isqrt(basis)) - 1
    result = SH_C0 * sh[:, :, 0]
    if degree == 0:
        return result
    if degree > 3:
        raise ValueError("SH evaluation supports degrees 0..3")
    x, y, z = dirs[:, 0:1], dirs[:, 1:2], dirs[:, 2:3]
    result = result - _SH_C1 * y * sh[:, :, 1] + _SH_C1 * z * sh[:, :, 2]
    result = result - _SH_C1 * x * sh[:, :, 3]
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        xy, yz, xz = x * y, y * z, x * z
        result = (
            result
            + _SH_C2[0] * xy * sh[:, :, 4]
            + _SH_C2[1] * yz * sh[:, :, 5]
            + _SH_C2[2] * (2 * zz - xx - yy) * sh[:, :, 6]
            + _SH_C2[3] * xz * sh[:, :, 7]
            + _SH_C2[4] * (xx - yy) * sh[:, :, 8]
        )
    if degree >= 3:
        result = (
            result
            + _SH_C3[0] * y * (3 * xx - yy) * sh[:, :, 9]
            + _SH_C3[1] * xy * z * sh[:, :, 10]
            + _SH_C3[2] * y * (4 * zz - xx - yy) * sh[:, :, 11]
            + _SH_C3[3] * z * (2 * zz - 3 * xx - 3 * yy) * sh[:, :, 12]
            + _SH_C3[4] * x * (4 * zz - xx - yy) * sh[:, :, 13]
            + _SH_C3[5] * z * (xx - yy) * sh[:, :, 14]
            + _SH_C3[6] * x * (xx - 3 * yy) * sh[:, :, 15]
        )
    return result


def _u_period(grid: sg.GridSpec) -> float | None:
    """Pixels per full azimuth turn, None for non-periodic grids."""
    if grid.family is sg.GridFamily.EQUIRECT:
        return float(grid.width)
    if grid.family in (sg.GridFamily.YIN, sg.GridFamily.YANG):
        return 4.0 * grid.width / 3.0
    return None


def _projection_jacobian(grid: sg.GridSpec, mu_cam: np.ndarray) -> np.ndarray:
    """d(pixel coords)/d(camera point) at each Gaussian center, (N, 2, 3)."""
    if grid.family is sg.GridFamily.CUBE_FACE:
        x, y, z = mu_cam[:, 0], mu_cam[:, 1], mu_cam[:, 2]
        z = np.where(np.abs(z) < 1e-12, 1e-12, z)
        jac = np.zeros((mu_cam.shape[0], 2, 3))
        jac[:, 0, 0] = grid.width / 2.0 / z
        jac[:, 0, 2] = -grid.width / 2.0 * x / z**2
        jac[:, 1, 1] = -grid.height / 2.0 / z
        jac[:, 1, 2] = grid.height / 2.0 * y / z**2
        return jac
    if grid.family is sg.GridFamily.YANG:
        return _projection_jacobian(
            sg.GridSpec.yin(grid.height), mu_cam @ sg.M_YANG.T
        ) @ sg.M_YANG
    x, y, z = mu_cam[:, 0], mu_cam[:, 1], mu_cam[:, 2]
    r2 = np.maximum(x * x + y * y, 1e-24)
    r = np.sqrt(r2)
    rho2 = r2 + z * z
    if grid.family is sg.GridFamily.EQUIRECT:
        ku = grid.width / (2 * math.pi)
        kv = grid.height / math.pi
    else:  # yin-local angles
        ku = grid.width / (1.5 * math.pi)
        kv = 2.0 * grid.height / math.pi
    jac = np.empty((mu_cam.shape[0], 2, 3))
    jac[:, 0, 0] = ku * (-y / r2)
    jac[:, 0, 1] = ku * (x / r2)
    jac[:, 0, 2] = 0.0
    jac[:, 1, 0] = -kv * (-z * x / (rho2 * r))
    jac[:, 1, 1] = -kv * (-z * y / (rho2 * r))
    jac[:, 1, 2] = -kv * (r / rho2)
    return jac


@dataclass
class _Projected:
    """Per-Gaussian screen-space quantities, already distance-sorted."""

    u0: np.ndarray
    v0: np.ndarray
    inv_a: np.ndarray  # inverse 2D covariance entries
    inv_b: np.ndarray
    inv_c: np.ndarray
    half_u: np.ndarray  # 3-sigma axis-aligned support half-extents
    half_v: np.ndarray
    alpha: np.ndarray
    colors: np.ndarray
    source_index: np.ndarray  # original cloud index per sorted splat


def _project(cloud: GaussianCloud, grid: sg.GridSpec, pose: Pose) -> _Projected:
    positions = cloud.positions
    mu_cam = pose.world_to_camera(positions)
    dist = np.linalg.norm(mu_cam, axis=1)
    valid = dist > 1e-9
    if grid.family is sg.GridFamily.CUBE_FACE:
        valid &= mu_cam[:, 2] > 1e-9
    index = np.flatnonzero(valid)
    mu_cam = mu_cam[index]
    dist = dist[index]

    u0, v0, _ = sg.direction_to_pixel(grid, mu_cam)
    jac = _projection_jacobian(grid, mu_cam)
    sigma_world = world_covariances(cloud)[index]
    rot = pose.rotation
    sigma_cam = np.einsum("ij,njk,lk->nil", rot, sigma_world, rot)
    cov2 = np.einsum("nij,njk,nlk->nil", jac, sigma_cam, jac)
    cov2[:, 0, 0] += COV_REGULARIZATION
    cov2[:, 1, 1] += COV_REGULARIZATION

    a = cov2[:, 0, 0]
    b = cov2[:, 0, 1]
    c = cov2[:, 1, 1]
    det = np.maximum(a * c - b * b, 1e-300)
    view_dirs = (positions[index] - pose.translation) / dist[:, None]
    colors = eval_sh_colors(cloud.sh[index], view_dirs)

    order = np.argsort(dist, kind="stable")
    return _Projected(
        u0=u0[order],
        v0=v0[order],
        inv_a=(c / det)[order],
        inv_b=(-b / det)[order],
        inv_c=(a / det)[order],
        half_u=(3.0 * np.sqrt(a))[order],
        half_v=(3.0 * np.sqrt(c))[order],
        alpha=cloud.opacities[index][order],
        colors=colors[order],
        source_index=index[order],
    )


def _splat_alpha(proj: _Projected, rows, du: np.ndarray, dv: np.ndarray) -> np.ndarray:
    """Alpha of sorted splats ``rows`` at pixel offsets (du, dv)."""
    qa = proj.inv_a[rows][:, None]
    qb = proj.inv_b[rows][:, None]
    qc = proj.inv_c[rows][:, None]
    q = qa * du * du + 2.0 * qb * du * dv + qc * dv * dv
    amp = proj.alpha[rows][:, None] * np.exp(-0.5 * q)
    return np.where(q <= SUPPORT_QMAX, np.minimum(amp, ALPHA_CLAMP), 0.0)


def _wrap_offsets(du: np.ndarray, period: float) -> np.ndarray:
    return (du + period / 2.0) % period - period / 2.0


def _compose_image(color, alpha, background, eps_alpha):
    safe = np.where(alpha >= eps_alpha, alpha, 1.0)
    image = np.where(
        alpha[:, :, None] >= eps_alpha, color / safe[:, :, None], background
    )
    return image


def _rasterize_impl(
    cloud: GaussianCloud,
    grid: sg.GridSpec,
    pose: Pose,
    background,
    tile_size: int,
    eps_alpha: float,
    early_stop: float,
    cull: bool,
    threads: int,
    collect_weights: bool,
):
    if grid.family is sg.GridFamily.CUBE_FACE:
        raise ValueError("the fast rasterizer supports equirect/yin/yang grids")
    bg = np.broadcast_to(np.asarray(background, dtype=float).reshape(-1), (3,))
    height, width = grid.shape
    out_color = np.zeros((height, width, 3))
    out_alpha = np.zeros((height, width))
    triplets: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []

    proj = _project(cloud, grid, pose)
    n = proj.u0.shape[0]
    period = _u_period(grid)
    if n:
        # Build splat instances.  Wide splats (support at least half a period)
        # collapse to one full-row instance with wrapped offsets; narrow ones
        # get period-shifted copies with disjoint supports and raw offsets, so
        # every pixel sees a given Gaussian exactly once.
        splat_ids: list[np.ndarray] = []
        centers: list[np.ndarray] = []
        wraps: list[np.ndarray] = []
        full: list[np.ndarray] = []
        all_ids = np.arange(n)
        if not cull:
            splat_ids.append(all_ids)
            centers.append(proj.u0)
            wraps.append(np.full(n, period is not None))
            full.append(np.ones(n, dtype=bool))
        elif period is None:
            keep = (proj.u0 + proj.half_u >= 0.5) & (proj.u0 - proj.half_u <= width - 0.5)
            splat_ids.append(all_ids[keep])
            centers.append(proj.u0[keep])
            wraps.append(np.zeros(keep.sum(), dtype=bool))
            full.append(np.zeros(keep.sum(), dtype=bool))
        else:
            wide = proj.half_u >= period / 2.0
            splat_ids.append(all_ids[wide])
            centers.append(proj.u0[wide])
            wraps.append(np.ones(int(wide.sum()), dtype=bool))
            full.append(np.ones(int(wide.sum()), dtype=bool))
            narrow = ~wide
            for shift in (-1.0, 0.0, 1.0):
                u_shift = proj.u0 + shift * period
                keep = (
                    narrow
                    & (u_shift + proj.half_u >= 0.5)
                    & (u_shift - proj.half_u <= width - 0.5)
                )
                splat_ids.append(all_ids[keep])
                centers.append(u_shift[keep])
                wraps.append(np.zeros(int(keep.sum()), dtype=bool))
                full.append(np.zeros(int(keep.sum()), dtype=bool))
        inst_splat = np.concatenate(splat_ids)
        inst_u = np.concatenate(centers)
        inst_wrap = np.concatenate(wraps)
        inst_full = np.concatenate(full)
        reorder = np.argsort(inst_splat, kind="stable")
        inst_splat = inst_splat[reorder]
        inst_u = inst_u[reorder]
        inst_wrap = inst_wrap[reorder]
        inst_full = inst_full[reorder]

        tiles_x = (width + tile_size - 1) // tile_size
        tiles_y = (height + tile_size - 1) // tile_size
        tile_lists: list[list[int]] = [[] for _ in range(tiles_x * tiles_y)]
        hu = proj.half_u[inst_splat]
        hv = proj.half_v[inst_splat]
        v0 = proj.v0[inst_splat]
        if cull:
            tx0 = np.clip(np.floor((inst_u - hu - 0.5) / tile_size).astype(int), 0, tiles_x - 1)
            tx1 = np.clip(np.floor((inst_u + hu + 0.5) / tile_size).astype(int), 0, tiles_x - 1)
            tx0 = np.where(inst_full, 0, tx0)
            tx1 = np.where(inst_full, tiles_x - 1, tx1)
            ty0f = np.floor((v0 - hv - 0.5) / tile_size).astype(int)
            ty1f = np.floor((v0 + hv + 0.5) / tile_size).astype(int)
            keep_v = (ty1f >= 0) & (ty0f <= tiles_y - 1)
            ty0 = np.clip(ty0f, 0, tiles_y - 1)
            ty1 = np.clip(ty1f, 0, tiles_y - 1)
            for i in range(inst_splat.shape[0]):
                if not keep_v[i]:
                    continue
                for ty in range(ty0[i], ty1[i] + 1):
                    base = ty * tiles_x
                    for tx in range(tx0[i], tx1[i] + 1):
                        tile_lists[base + tx].append(i)
        else:
            everything = list(range(inst_splat.shape[0]))
            tile_lists = [everything for _ in range(tiles_x * tiles_y)]

        def render_tile(tile_index: int):
            entries = tile_lists[tile_index]
            if not entries:
                return None
            ty, tx = divmod(tile_index, tiles_x)
            xs = np.arange(tx * tile_size, min(width, (tx + 1) * tile_size))
            ys = np.arange(ty * tile_size, min(height, (ty + 1) * tile_size))
            px = (xs + 0.5)[None, :].repeat(ys.shape[0], axis=0).reshape(-1)
            py = (ys + 0.5)[:, None].repeat(xs.shape[0], axis=1).reshape(-1)
            ids = np.asarray(entries)
            rows = inst_splat[ids]
            du = px[None, :] - inst_u[ids][:, None]
            if period is not None:
                wrap_rows = inst_wrap[ids]
                if np.any(wrap_rows):
                    du[wrap_rows] = _wrap_offsets(du[wrap_rows], period)
            dv = py[None, :] - proj.v0[rows][:, None]
            a = _splat_alpha(proj, rows, du, dv)
            trans = np.cumprod(1.0 - a, axis=0)
            t_excl = np.vstack([np.ones((1, a.shape[1])), trans[:-1]])
            w = t_excl * a
            if early_stop > 0:
                w[t_excl < early_stop] = 0.0
            tile_color = w.T @ proj.colors[rows]
            tile_alpha = w.sum(axis=0)
            payload = None
            if collect_weights:
                nz = w != 0.0
                srow, spix = np.nonzero(nz)
                payload = (
                    py[spix].astype(int) * width + px[spix].astype(int),
                    proj.source_index[rows[srow]],
                    w[nz],
                )
            return tile_index, xs, ys, tile_color, tile_alpha, payload

        tile_order = range(tiles_x * tiles_y)
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(render_tile, tile_order))
        else:
            results = [render_tile(t) for t in tile_order]
        for item in results:
            if item is None:
                continue
            _, xs, ys, tile_color, tile_alpha, payload = item
            sl = np.ix_(ys, xs)
            out_color[sl] = tile_color.reshape(ys.shape[0], xs.shape[0], 3)
            out_alpha[sl] = tile_alpha.reshape(ys.shape[0], xs.shape[0])
            if payload is not None:
                triplets.append(payload)

    image = _compose_image(out_color, out_alpha, bg, eps_alpha)
    output = RenderOutput(color=out_color, alpha=out_alpha[:, :, None], image=image)
    if not collect_weights:
        return output, None
    from scipy import sparse

    if triplets:
        rows = np.concatenate([t[0] for t in triplets])
        cols = np.concatenate([t[1] for t in triplets])
        vals = np.concatenate([t[2] for t in triplets])
    else:
        rows = cols = vals = np.zeros(0)
    weights = sparse.coo_matrix(
        (vals, (rows, cols)), shape=(height * width, len(cloud))
    ).tocsr()
    return output, weights


def rasterize(
    cloud: GaussianCloud,
    grid: sg.GridSpec,
    pose: Pose,
    background=(0.0, 0.0, 0.0),
    tile_size: int = 16,
    eps_alpha: float = DEFAULT_EPS_ALPHA,
    early_stop: float = DEFAULT_EARLY_STOP,
    cull: bool = True,
    threads: int = 1,
) -> RenderOutput:
    """Tiled front-to-back splatting onto an equirect/Yin/Yang raster."""
    output, _ = _rasterize_impl(
        cloud, grid, pose, background, tile_size, eps_alpha, early_stop, cull,
        threads, collect_weights=False,
    )
    return output


def rasterize_with_weights(
    cloud: GaussianCloud,
    grid: sg.GridSpec,
    pose: Pose,
    background=(0.0, 0.0, 0.0),
    tile_size: int = 16,
    eps_alpha: float = DEFAULT_EPS_ALPHA,
    early_stop: float = DEFAULT_EARLY_STOP,
    threads: int = 1,
):
    """Rasterize and also return the sparse per-pixel compositing weights.

    The second return value W is (H*W, N) with entries ``T * a`` such that
    ``W @ colors == output.color.reshape(-1, 3)`` and row sums equal the
    accumulated alpha; color refinement treats rendering as this linear map.
    """
    return _rasterize_impl(
        cloud, grid, pose, background, tile_size, eps_alpha, early_stop,
        cull=True, threads=threads, collect_weights=True,
    )


def oracle_render(
    cloud: GaussianCloud,
    grid: sg.GridSpec,
    pose: Pose,
    background=(0.0, 0.0, 0.0),
    eps_alpha: float = DEFAULT_EPS_ALPHA,
) -> RenderOutput:
    """Reference renderer: identical model, no tiles, no culling, no early-out.

    Every projectable Gaussian is evaluated at every pixel in strict sorted
    order with a fixed summation order, so results are bit-stable across runs.
    Supports cube faces in addition to the spherical grids.
    """
    bg = np.broadcast_to(np.asarray(background, dtype=float).reshape(-1), (3,))
    height, width = grid.shape
    proj = _project(cloud, grid, pose)
    period = _u_period(grid)
    xs = (np.arange(width) + 0.5)[None, :].repeat(height, axis=0).reshape(-1)
    ys = (np.arange(height) + 0.5)[:, None].repeat(width, axis=1).reshape(-1)
    n_pix = xs.shape[0]
    trans = np.ones(n_pix)
    color = np.zeros((n_pix, 3))
    alpha = np.zeros(n_pix)
    for j in range(proj.u0.shape[0]):
        du = xs - proj.u0[j]
        if period is not None:
            du = _wrap_offsets(du, period)
        dv = ys - proj.v0[j]
        a = _splat_alpha(proj, np.array([j]), du[None, :], dv[None, :])[0]
        contribution = trans * a
        color += contribution[:, None] * proj.colors[j]
        alpha += contribution
        trans = trans * (1.0 - a)
    out_color = color.reshape(height, width, 3)
    out_alpha = alpha.reshape(height, width)
    image = _compose_image(out_color, out_alpha, bg, eps_alpha)
    return RenderOutput(color=out_color, alpha=out_alpha[:, :, None], image=image)


def render_yinyang_passes(
    cloud: GaussianCloud,
    pose: Pose,
    pass_height: int,
    background=(0.0, 0.0, 0.0),
    eps_alpha: float = DEFAULT_EPS_ALPHA,
    threads: int = 1,
) -> tuple[RenderOutput, RenderOutput]:
    """The two normalized grid renders underlying ``render_yinyang``."""
    yin = rasterize(
        cloud, sg.GridSpec.yin(pass_height), pose, background=background,
        eps_alpha=eps_alpha, threads=threads,
    )
    yang = rasterize(
        cloud, sg.GridSpec.yang(pass_height), pose, background=background,
        eps_alpha=eps_alpha, threads=threads,
    )
    return yin, yang


def render_yinyang(
    cloud: GaussianCloud,
    pose: Pose,
    out_grid: sg.GridSpec,
    pass_height: int | None = None,
    background=(0.0, 0.0, 0.0),
    eps_alpha: float = DEFAULT_EPS_ALPHA,
    threads: int = 1,
) -> np.ndarray:
    """Two-pass render: rasterize on Yin and Yang, normalize, recompose."""
    if out_grid.family is not sg.GridFamily.EQUIRECT:
        raise ValueError("render_yinyang produces equirect images")
    if pass_height is None:
        pass_height = max(1, out_grid.height // 2)
    yin, yang = render_yinyang_passes(
        cloud, pose, pass_height, background=background, eps_alpha=eps_alpha,
        threads=threads,
    )
    return recompose_yinyang(yin.image, yang.image, out_grid)
