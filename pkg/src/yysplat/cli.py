"""Command-line front end for the Yin-Yang splatting pipeline.

Subcommands cover each stage (decompose, recompose, cubemap, sweep, render,
refine, match, eval, synth) plus ``pipeline``, which runs the whole flow on a
stereo pair: decompose both views, extract features, sweep all cross-grid
warps into cost volumes, lift winning depths to pixel-aligned Gaussians,
optionally refine colors, render held-out poses, and report PSNR/SSIM.

Exit codes: 0 success, 1 usage error, 2 data error.  All randomness is
seeded; identical invocations produce bit-identical outputs.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import decompose as dec
from . import metrics
from . import scene_synth
from . import sphere_geom as sg
from . import sweep
from .gaussians import GaussianCloud, pixel_aligned_cloud, refine_colors
from .io_formats import (
    FormatError,
    read_cloud,
    read_image,
    read_pfm,
    read_pose_file,
    write_cloud,
    write_image,
    write_pfm,
    write_pose_file,
)
from .rasterizer import rasterize, render_yinyang
from .sampling import bilinear_sample

_CUBE_FACE_NAMES = ("posx", "negx", "posy", "negy", "posz", "negz")


class _ConfigError(Exception):
    pass


def _parse_bg(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("background must be r,g,b")
    try:
        return tuple(float(p) for p in parts)  # type: ignore[return-value]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _format_metric(value: float) -> str:
    if math.isinf(value):
        return "inf"
    return f"{value:.6f}"


def _table_psnr(value: float) -> float:
    return min(value, metrics.PSNR_CAP)


def _write_report(path, records) -> None:
    lines = [
        f"pose={pose} metric={metric} value={_format_metric(value)}"
        for pose, metric, value in records
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def _print_eval_line(pose: int, psnr_value: float, ssim_value: float) -> None:
    print(
        f"pose={pose} psnr={_table_psnr(psnr_value):.4f} ssim={ssim_value:.6f}"
    )


# --------------------------------------------------------------------------
# Cost-volume files: PFM holds the (H*D, W) stack of depth slices; a text
# sidecar carries the grid family and the depth ladder parameters.


def _cost_sidecar(path) -> Path:
    return Path(str(path) + ".meta")


def write_cost_volume(volume: sweep.CostVolume, path) -> None:
    height, width, depth_count = volume.scores.shape
    stacked = np.transpose(volume.scores, (2, 0, 1)).reshape(depth_count * height, width)
    write_pfm(stacked[:, :, None], path)
    meta = "\n".join(
        [
            f"family={volume.grid.family.name.lower()}",
            f"height={height}",
            f"width={width}",
            f"depths={depth_count}",
            f"near={volume.candidates.near:.17g}",
            f"far={volume.candidates.far:.17g}",
        ]
    )
    _cost_sidecar(path).write_text(meta + "\n", encoding="ascii")


def read_cost_volume(path) -> sweep.CostVolume:
    sidecar = _cost_sidecar(path)
    if not sidecar.exists():
        raise FormatError(f"missing cost-volume sidecar {sidecar}")
    meta = {}
    for line in sidecar.read_text(encoding="ascii").splitlines():
        if "=" in line:
            key, _, value = line.partition("=")
            meta[key.strip()] = value.strip()
    try:
        family = meta["family"]
        height = int(meta["height"])
        width = int(meta["width"])
        depth_count = int(meta["depths"])
        near = float(meta["near"])
        far = float(meta["far"])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"malformed cost-volume sidecar {sidecar}: {exc}") from None
    if family == "yin":
        grid = sg.GridSpec.yin(height)
    elif family == "yang":
        grid = sg.GridSpec.yang(height)
    else:
        raise FormatError(f"malformed cost-volume sidecar {sidecar}: family {family}")
    stacked = read_pfm(path)[:, :, 0]
    if stacked.shape != (depth_count * height, width):
        raise FormatError(f"cost volume {path} does not match its sidecar")
    scores = np.transpose(
        stacked.reshape(depth_count, height, width), (1, 2, 0)
    ).astype(float)
    candidates = sweep.depth_candidates(near, far, depth_count)
    return sweep.CostVolume(grid=grid, candidates=candidates, scores=scores)


# --------------------------------------------------------------------------
# Subcommand implementations.


def _cmd_decompose(args) -> int:
    image = read_image(args.input)
    yin, yang = dec.decompose_yinyang(image, out_height=args.height)
    write_image(yin, args.yin)
    write_image(yang, args.yang)
    print(f"wrote {args.yin} and {args.yang} ({yin.shape[0]}x{yin.shape[1]})")
    return 0


def _cmd_recompose(args) -> int:
    yin = read_image(args.yin)
    yang = read_image(args.yang)
    height = args.height if args.height else 2 * yin.shape[0]
    out = dec.recompose_yinyang(yin, yang, sg.GridSpec.equirect(height))
    write_image(out, args.output)
    print(f"wrote {args.output} ({out.shape[0]}x{out.shape[1]})")
    return 0


def _cmd_cubemap(args) -> int:
    image = read_image(args.input)
    height, width = image.shape[:2]
    if width != 2 * height:
        raise ValueError("cubemap expects an equirect input (W = 2H)")
    face_size = args.face_size if args.face_size else height // 2
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    suffix = Path(args.input).suffix.lower()
    equirect = sg.GridSpec.equirect(height)
    for name, (grid, pose) in zip(
        _CUBE_FACE_NAMES, sg.cubemap_rig(face_size)
    ):
        dirs = sg.grid_directions(grid) @ pose.rotation
        u, v, _ = sg.direction_to_pixel(equirect, dirs)
        face = bilinear_sample(image, u, v, wrap_u=True)
        write_image(face, outdir / f"face_{name}{suffix}")
    print(f"wrote 6 faces of {face_size}x{face_size} to {outdir}")
    return 0


def _decompose_views(images, height):
    """Per view: dict with yin/yang images, features, and grids."""
    yin_grid = sg.GridSpec.yin(height)
    yang_grid = sg.GridSpec.yang(height)
    views = []
    for image in images:
        yin_img, yang_img = dec.decompose_yinyang(image, out_height=height)
        views.append(
            {
                "images": {"yin": yin_img, "yang": yang_img},
                "features": {},
            }
        )
    return views, {"yin": yin_grid, "yang": yang_grid}


def _cmd_sweep(args) -> int:
    target_image = read_image(args.target_image)
    source_image = read_image(args.source_image)
    poses = read_pose_file(args.poses)
    target_pose = poses[args.target_index]
    source_pose = poses[args.source_index]
    height = args.height if args.height else target_image.shape[0] // 2
    grids = {"yin": sg.GridSpec.yin(height), "yang": sg.GridSpec.yang(height)}
    target_yin, target_yang = dec.decompose_yinyang(target_image, out_height=height)
    source_yin, source_yang = dec.decompose_yinyang(source_image, out_height=height)
    target_img = {"yin": target_yin, "yang": target_yang}[args.grid]
    candidates = sweep.depth_candidates(args.near, args.far, args.depths)
    volume = sweep.paired_cost_volume(
        sweep.extract_features(target_img, window=args.window),
        grids[args.grid],
        target_pose,
        (
            sweep.extract_features(source_yin, window=args.window),
            sweep.extract_features(source_yang, window=args.window),
        ),
        (grids["yin"], grids["yang"]),
        source_pose,
        candidates,
    )
    write_cost_volume(volume, args.output_cost)
    depth = sweep.depth_from_cost(volume)
    write_pfm(depth, args.output_depth)
    print(f"wrote {args.output_cost} and {args.output_depth}")
    return 0


def _cmd_render(args) -> int:
    cloud = read_cloud(args.cloud)
    poses = read_pose_file(args.poses)
    pose = poses[args.pose_index]
    if args.width % 2:
        raise ValueError("--width must be even (equirect W = 2H)")
    out_grid = sg.GridSpec.equirect(args.width // 2)
    if args.mode == "equirect":
        image = rasterize(
            cloud, out_grid, pose, background=args.bg, threads=args.threads
        ).image
    else:
        image = render_yinyang(
            cloud, pose, out_grid,
            pass_height=args.pass_height, background=args.bg, threads=args.threads,
        )
    write_image(image, args.output)
    print(f"wrote {args.output}")
    return 0


def _cmd_refine(args) -> int:
    cloud = read_cloud(args.cloud)
    poses = read_pose_file(args.poses)
    if len(args.image) > len(poses):
        raise ValueError("more images than poses")
    views = [(read_image(path), poses[i]) for i, path in enumerate(args.image)]
    refined = refine_colors(
        cloud, views,
        iterations=args.iterations, learning_rate=args.learning_rate,
        pass_height=args.pass_height, background=args.bg,
    )
    write_cloud(refined, args.output)
    print(f"wrote {args.output} ({len(refined)} gaussians)")
    return 0


def _cmd_match(args) -> int:
    volume = read_cost_volume(args.cost)
    source_labels = np.rint(read_pfm(args.source_labels)[:, :, 0]).astype(int)
    target_labels = np.rint(read_pfm(args.target_labels)[:, :, 0]).astype(int)
    poses = read_pose_file(args.poses)
    if target_labels.shape[1] != 3 * target_labels.shape[0]:
        raise ValueError("target labels must cover a Yin/Yang grid (W = 3H)")
    maker = sg.GridSpec.yin if args.target_grid == "yin" else sg.GridSpec.yang
    target_grid = maker(target_labels.shape[0])
    matches = sweep.match_segments(
        volume, source_labels, target_labels,
        poses[args.source_index], poses[args.target_index], target_grid,
    )
    lines = [f"source={src} target={dst}" for src, dst in sorted(matches.items())]
    for line in lines:
        print(line)
    if args.output:
        Path(args.output).write_text("\n".join(lines) + "\n", encoding="ascii")
    return 0


def _cmd_eval(args) -> int:
    if len(args.images) % 2:
        raise ValueError("eval expects rendered/reference image pairs")
    records = []
    for index in range(len(args.images) // 2):
        rendered = read_image(args.images[2 * index])
        reference = read_image(args.images[2 * index + 1])
        psnr_value = metrics.psnr(rendered, reference)
        ssim_value = metrics.ssim(rendered, reference)
        records.append((index, "psnr", psnr_value))
        records.append((index, "ssim", ssim_value))
        _print_eval_line(index, psnr_value, ssim_value)
    if args.report:
        _write_report(args.report, records)
    return 0


def _cmd_synth(args) -> int:
    scene = scene_synth.make_scene(args.scene, seed=args.seed)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_cloud(scene.cloud, outdir / "cloud.bin")
    poses = list(scene.view_poses) + list(scene.eval_poses)
    names = [f"view{i}" for i in range(len(scene.view_poses))] + [
        f"eval{i}" for i in range(len(scene.eval_poses))
    ]
    write_pose_file(poses, outdir / "poses.txt", names=names)
    grid = sg.GridSpec.equirect(args.height)
    if scene.geometry is not None:
        for name, pose in zip(names, poses):
            color, depth, labels = scene_synth.ground_truth_maps(
                scene.geometry, grid, pose
            )
            write_image(color, outdir / f"gt_color_{name}.png")
            write_pfm(color, outdir / f"gt_color_{name}.pfm")
            # PFM payloads must stay finite; 0 marks rays that miss the scene,
            # mirroring the background label.
            write_pfm(np.where(np.isfinite(depth), depth, 0.0), outdir / f"gt_depth_{name}.pfm")
            write_pfm(labels.astype(np.float32)[:, :, None], outdir / f"gt_labels_{name}.pfm")
    print(f"wrote scene '{args.scene}' ({len(scene.cloud)} gaussians) to {outdir}")
    return 0


def _pipeline_references(scene, out_grid, threads):
    refs = []
    for pose in scene.eval_poses:
        if scene.geometry is not None:
            refs.append(scene_synth.analytic_render(scene.geometry, out_grid, pose))
        else:
            refs.append(
                render_yinyang(scene.cloud, pose, out_grid, threads=threads)
            )
    return refs


def _cmd_pipeline(args) -> int:
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    if args.scene:
        scene = scene_synth.make_scene(args.scene, seed=args.seed)
        view_poses = list(scene.view_poses)
        eval_poses = list(scene.eval_poses)
        input_grid = sg.GridSpec.equirect(args.height)
        if scene.geometry is not None:
            inputs = [
                scene_synth.analytic_render(scene.geometry, input_grid, pose)
                for pose in view_poses
            ]
        else:
            inputs = [
                render_yinyang(scene.cloud, pose, input_grid, threads=args.threads)
                for pose in view_poses
            ]
    else:
        if not args.image or len(args.image) != 2:
            raise ValueError("pipeline needs --scene or exactly two --image inputs")
        if not args.poses:
            raise ValueError("pipeline file mode needs --poses")
        scene = None
        inputs = [read_image(path) for path in args.image]
        poses = read_pose_file(args.poses)
        if len(poses) < 2:
            raise ValueError("pose file must contain at least the two view poses")
        view_poses = poses[:2]
        eval_poses = poses[2:] or poses[:1]

    feature_height = args.feature_height or inputs[0].shape[0] // 2
    views, grids = _decompose_views(inputs, feature_height)
    for view in views:
        for key in ("yin", "yang"):
            view["features"][key] = sweep.extract_features(
                view["images"][key], window=args.window
            )
    candidates = sweep.depth_candidates(args.near, args.far, args.depths)

    clouds = []
    for v, view in enumerate(views):
        other = views[1 - v]
        source_feats = (other["features"]["yin"], other["features"]["yang"])
        source_grids = (grids["yin"], grids["yang"])
        for key in ("yin", "yang"):
            volume = sweep.paired_cost_volume(
                view["features"][key], grids[key], view_poses[v],
                source_feats, source_grids, view_poses[1 - v], candidates,
            )
            depth = sweep.depth_from_cost(volume)
            write_pfm(depth, outdir / f"depth_view{v}_{key}.pfm")
            if args.save_cost:
                write_cost_volume(volume, outdir / f"cost_view{v}_{key}.pfm")
            clouds.append(
                pixel_aligned_cloud(
                    view["images"][key], depth, grids[key], view_poses[v],
                    opacity=args.opacity, scale_factor=args.scale_factor,
                )
            )
    merged = GaussianCloud.merge(clouds)
    if args.refine_iters > 0:
        merged = refine_colors(
            merged, list(zip(inputs, view_poses)),
            iterations=args.refine_iters, background=args.bg,
        )
    write_cloud(merged, outdir / "cloud.bin")

    out_width = args.out_width or 2 * inputs[0].shape[0]
    if out_width % 2:
        raise ValueError("--out-width must be even")
    out_grid = sg.GridSpec.equirect(out_width // 2)
    if scene is not None:
        references = _pipeline_references(scene, out_grid, args.threads)
    else:
        references = [None] * len(eval_poses)

    records = []
    for index, pose in enumerate(eval_poses):
        image = render_yinyang(
            merged, pose, out_grid,
            pass_height=args.pass_height, background=args.bg, threads=args.threads,
        )
        write_pfm(image, outdir / f"render_{index}.pfm")
        write_image(image, outdir / f"render_{index}.png")
        if references[index] is not None:
            psnr_value = metrics.psnr(image, references[index])
            ssim_value = metrics.ssim(image, references[index])
            records.append((index, "psnr", psnr_value))
            records.append((index, "ssim", ssim_value))
            _print_eval_line(index, psnr_value, ssim_value)
        else:
            print(f"pose={index} rendered (no reference)")
    if args.report:
        _write_report(args.report, records)
    print(f"pipeline outputs in {outdir} ({len(merged)} gaussians)")
    return 0


# --------------------------------------------------------------------------
# Parser construction and config handling.


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="RNG seed")
    parser.add_argument(
        "--threads", type=int, default=os.cpu_count() or 1,
        help="worker thread cap",
    )
    parser.add_argument(
        "--config", default=None,
        help="key=value file of flag defaults (flags still win)",
    )


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="yysplat",
        description="Omnidirectional Gaussian splatting on Yin-Yang grids",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    submap = {}

    def sub(name, func, help_text):
        p = subparsers.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        _add_common(p)
        submap[name] = p
        return p

    p = sub("decompose", _cmd_decompose, "split an equirect image into Yin and Yang")
    p.add_argument("--input", required=True, help="equirect PNG/PFM")
    p.add_argument("--height", type=int, default=None, help="output grid height (default H/2)")
    p.add_argument("--yin", required=True, help="output Yin image path")
    p.add_argument("--yang", required=True, help="output Yang image path")

    p = sub("recompose", _cmd_recompose, "blend Yin and Yang images into an equirect")
    p.add_argument("--yin", required=True)
    p.add_argument("--yang", required=True)
    p.add_argument("--height", type=int, default=None, help="output equirect height (default 2x Yin height)")
    p.add_argument("--output", required=True)

    p = sub("cubemap", _cmd_cubemap, "resample an equirect image onto 6 cube faces")
    p.add_argument("--input", required=True)
    p.add_argument("--face-size", type=int, default=None, help="face resolution (default H/2)")
    p.add_argument("--outdir", required=True)

    p = sub("sweep", _cmd_sweep, "sphere-sweep a stereo pair into a cost volume")
    p.add_argument("--target-image", required=True, help="equirect image of the target view")
    p.add_argument("--source-image", required=True, help="equirect image of the source view")
    p.add_argument("--poses", required=True)
    p.add_argument("--target-index", type=int, default=0)
    p.add_argument("--source-index", type=int, default=1)
    p.add_argument("--grid", choices=("yin", "yang"), default="yin", help="target grid")
    p.add_argument("--height", type=int, default=None, help="feature grid height (default H/2)")
    p.add_argument("--near", type=float, default=1.0)
    p.add_argument("--far", type=float, default=100.0)
    p.add_argument("--depths", type=int, default=64)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--output-cost", required=True)
    p.add_argument("--output-depth", required=True)

    p = sub("render", _cmd_render, "rasterize a Gaussian cloud to an equirect image")
    p.add_argument("--cloud", required=True)
    p.add_argument("--poses", required=True)
    p.add_argument("--pose-index", type=int, default=0)
    p.add_argument("--mode", choices=("equirect", "yinyang"), default="yinyang")
    p.add_argument("--width", type=int, default=256, help="output equirect width")
    p.add_argument("--bg", type=_parse_bg, default=(0.0, 0.0, 0.0), help="background r,g,b")
    p.add_argument("--pass-height", type=int, default=None)
    p.add_argument("--output", required=True)

    p = sub("refine", _cmd_refine, "color-only gradient refinement of a cloud")
    p.add_argument("--cloud", required=True)
    p.add_argument("--poses", required=True)
    p.add_argument("--image", action="append", required=True,
                   help="reference image (repeat; order matches pose file)")
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--pass-height", type=int, default=None)
    p.add_argument("--bg", type=_parse_bg, default=(0.0, 0.0, 0.0))
    p.add_argument("--output", required=True)

    p = sub("match", _cmd_match, "match segment labels across views via swept depth")
    p.add_argument("--cost", required=True, help="cost volume written by sweep")
    p.add_argument("--source-labels", required=True, help="label PFM on the cost grid")
    p.add_argument("--target-labels", required=True, help="label PFM on the target grid")
    p.add_argument("--poses", required=True)
    p.add_argument("--source-index", type=int, default=0)
    p.add_argument("--target-index", type=int, default=1)
    p.add_argument("--target-grid", choices=("yin", "yang"), default="yin")
    p.add_argument("--output", default=None)

    p = sub("eval", _cmd_eval, "PSNR/SSIM for rendered/reference image pairs")
    p.add_argument("images", nargs="+", help="rendered reference [rendered reference ...]")
    p.add_argument("--report", default=None, help="write key=value records here")

    p = sub("synth", _cmd_synth, "generate a synthetic scene bundle")
    p.add_argument("--scene", choices=scene_synth.scene_names(), required=True)
    p.add_argument("--height", type=int, default=128, help="ground-truth equirect height")
    p.add_argument("--outdir", required=True)

    p = sub("pipeline", _cmd_pipeline, "full two-view reconstruction and evaluation")
    p.add_argument("--scene", choices=scene_synth.scene_names(), default=None)
    p.add_argument("--image", action="append", default=None,
                   help="equirect input (give twice for file mode)")
    p.add_argument("--poses", default=None, help="pose file for file mode")
    p.add_argument("--height", type=int, default=128, help="input resolution in scene mode")
    p.add_argument("--feature-height", type=int, default=None)
    p.add_argument("--near", type=float, default=1.0)
    p.add_argument("--far", type=float, default=100.0)
    p.add_argument("--depths", type=int, default=64)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--opacity", type=float, default=0.9)
    p.add_argument("--scale-factor", type=float, default=1.0)
    p.add_argument("--refine-iters", type=int, default=0)
    p.add_argument("--out-width", type=int, default=None)
    p.add_argument("--pass-height", type=int, default=None)
    p.add_argument("--bg", type=_parse_bg, default=(0.0, 0.0, 0.0))
    p.add_argument("--save-cost", action="store_true")
    p.add_argument("--outdir", required=True)
    p.add_argument("--report", default=None)

    return parser, submap


def _load_config(path) -> dict[str, str]:
    values = {}
    try:
        text = Path(path).read_text(encoding="ascii")
    except OSError as exc:
        raise _ConfigError(f"cannot read config {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise _ConfigError(f"{path}:{lineno}: expected key=value")
        key, _, value = stripped.partition("=")
        values[key.strip()] = value.strip()
    return values


def _apply_config(subparser: argparse.ArgumentParser, values: dict[str, str]) -> None:
    actions = {
        action.dest: action
        for action in subparser._actions  # noqa: SLF001 - argparse offers no API
        if action.dest not in ("help", "config")
    }
    defaults = {}
    for key, raw in values.items():
        dest = key.replace("-", "_")
        action = actions.get(dest)
        if action is None:
            raise _ConfigError(f"unknown config key {key!r}")
        if isinstance(action, argparse._StoreTrueAction):  # noqa: SLF001
            defaults[dest] = raw.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            try:
                defaults[dest] = action.type(raw)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise _ConfigError(f"config key {key!r}: {exc}") from None
        else:
            defaults[dest] = raw
    subparser.set_defaults(**defaults)


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        parser, submap = _build_parser()
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return 0 if not exc.code else 1
        if getattr(args, "config", None):
            config = _load_config(args.config)
            parser, submap = _build_parser()
            _apply_config(submap[args.command], config)
            try:
                args = parser.parse_args(argv)
            except SystemExit as exc:
                return 0 if not exc.code else 1
    except _ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (FormatError, OSError, ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
