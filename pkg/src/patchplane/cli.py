"""Command-line entry point: ``patchplane <command> [options]``.

Exit status: 0 success, 1 validation error (bad options, missing or corrupt
files), 2 numeric failure (non-finite loss, no overlap, failed gradcheck).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import imageio
from .geometry import Intrinsics, Pose, pose_compose, se3_exp
from .gradcheck import gradcheck
from .keypoints import gradient_map, select_keypoints
from .losses import LossConfig
from .metrics import depth_metrics, format_table, normal_metrics, normals_from_depth, pose_metrics
from .planes import region_planes
from .solver import NumericFailure, OverlapFailure, SolverConfig, prepare_bundle, refine
from .superpixels import DEFAULT_K, DEFAULT_MIN_AREA, DEFAULT_MIN_SIZE, DEFAULT_SIGMA, felzenszwalb_segment, large_regions
from .synth import default_scene, make_scene

class ValidationError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(message)


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="resolved-config JSON to start from")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("out"))
    return p


def _model_options(p):
    p.add_argument("--frames", type=int, choices=(3, 5), default=3, help="3 = two sources, 5 = four sources")
    p.add_argument("--alpha", type=float, default=0.85)
    p.add_argument("--lambda1", type=float, default=0.001)
    p.add_argument("--lambda2", type=float, default=0.05)
    p.add_argument("--window-n", type=int, default=3)
    p.add_argument("--keypoints", type=int, default=3000)
    p.add_argument("--min-area", type=int, default=DEFAULT_MIN_AREA)
    p.add_argument("--grid-scale", type=int, default=4)
    p.add_argument("--epsilon", type=float, default=1e-4)
    p.add_argument("--seg-k", type=float, default=DEFAULT_K)
    p.add_argument("--seg-sigma", type=float, default=DEFAULT_SIGMA)
    p.add_argument("--seg-min-size", type=int, default=DEFAULT_MIN_SIZE)
    p.add_argument("--scene", type=Path, help="directory written by `synth`")
    p.add_argument("--target", type=Path)
    p.add_argument("--sources", type=Path, nargs="+")
    p.add_argument("--intrinsics", type=Path)
    p.add_argument("--gt-labels", action="store_true", help="use ground-truth plane labels of a synth scene")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="patchplane", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _common()

    p = sub.add_parser("synth", parents=[common], help="render a synthetic piecewise-planar scene")
    p.add_argument("--frames", type=int, choices=(3, 5), default=3)
    p.add_argument("--width", type=int, default=192)
    p.add_argument("--height", type=int, default=144)

    p = sub.add_parser("keypoints", parents=[common], help="select keypoints on an image")
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--keypoints", type=int, default=3000)
    p.add_argument("--window-n", type=int, default=3)
    p.add_argument("--block", type=int, default=16)

    p = sub.add_parser("segment", parents=[common], help="superpixel segmentation and large regions")
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--min-area", type=int, default=DEFAULT_MIN_AREA)
    p.add_argument("--seg-k", type=float, default=DEFAULT_K)
    p.add_argument("--seg-sigma", type=float, default=DEFAULT_SIGMA)
    p.add_argument("--seg-min-size", type=int, default=DEFAULT_MIN_SIZE)

    p = sub.add_parser("refine", parents=[common], help="optimise depth and poses directly")
    _model_options(p)
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--lr-depth", type=float, default=1e-2)
    p.add_argument("--lr-pose", type=float, default=1e-3)
    p.add_argument("--init-depth", type=Path, help="PFM initial depth")
    p.add_argument("--init-constant", type=float, default=2.0)
    p.add_argument("--init-gt-scale", type=float, help="start from this multiple of the scene's GT depth")
    p.add_argument("--init-poses", type=Path, help="JSON list of target->source poses")
    p.add_argument("--gt-poses", action="store_true", help="start from (and with --fix-poses keep) GT poses")
    p.add_argument("--fix-poses", action="store_true")

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of the gradient")
    _model_options(p)
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--perturb-depth", type=float, default=0.05, help="log-normal noise on GT depth")
    p.add_argument("--perturb-pose", type=float, default=2e-3, help="twist noise on GT poses")
    p.add_argument("--no-pin", action="store_true", help="plain differences (kinks are not excluded)")

    p = sub.add_parser("eval", parents=[common], help="depth / normal / pose metrics")
    p.add_argument("--pred", type=Path, required=True, help="predicted depth PFM")
    p.add_argument("--gt", type=Path, required=True, help="ground-truth depth PFM")
    p.add_argument("--intrinsics", type=Path, help="enables surface-normal metrics")
    p.add_argument("--no-median-scale", action="store_true")
    p.add_argument("--normal-window", type=int, default=5)
    p.add_argument("--pred-poses", type=Path)
    p.add_argument("--gt-pose-file", type=Path)
    return parser


# ---------------------------------------------------------------- helpers


def _resolved(args) -> dict:
    out = {}
    for key, val in vars(args).items():
        if key == "config":
            continue
        if isinstance(val, Path):
            val = str(val)
        elif isinstance(val, list):
            val = [str(v) if isinstance(v, Path) else v for v in val]
        out[key] = val
    return out


def _write_config(args) -> None:
    args.out.mkdir(parents=True, exist_ok=True)
    imageio.write_json(args.out / "config.json", _resolved(args))


def _load_poses(path) -> list:
    obj = imageio.read_json(path)
    try:
        return [Pose.from_json(p) for p in obj]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: malformed pose list ({exc})") from exc


def _load_intrinsics(path) -> Intrinsics:
    obj = imageio.read_json(path)
    try:
        return Intrinsics.from_json(obj)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: malformed intrinsics ({exc})") from exc


def _n_sources(args) -> int:
    return 2 if args.frames == 3 else 4


def _load_inputs(args):
    """Returns ``(target, sources, k, scene)``; ``scene`` holds GT when reading a synth directory."""
    if args.scene is not None:
        scene = _load_scene(args.scene)
        n = _n_sources(args)
        if len(scene["sources"]) < n:
            raise ValidationError(f"{args.scene}: scene has {len(scene['sources'])} sources, --frames needs {n}")
        scene["sources"] = scene["sources"][:n]
        scene["poses"] = scene["poses"][:n]
        return scene["target"], scene["sources"], scene["k"], scene
    if args.target is None or not args.sources or args.intrinsics is None:
        raise ValidationError("give either --scene or all of --target, --sources and --intrinsics")
    target = imageio.load_image(args.target)
    sources = [imageio.load_image(s) for s in args.sources]
    return target, sources, _load_intrinsics(args.intrinsics), None


def _load_scene(path: Path) -> dict:
    meta = imageio.read_json(path / "scene_files.json")
    return {
        "target": imageio.load_image(path / meta["target"]),
        "sources": [imageio.load_image(path / s) for s in meta["sources"]],
        "k": _load_intrinsics(path / "intrinsics.json"),
        "poses": _load_poses(path / "poses.json"),
        "gt_depth": imageio.load_pfm(path / meta["gt_depth"]),
        "labels": imageio.load_labels(path / meta["gt_labels"]),
    }


def _loss_config(args) -> LossConfig:
    return LossConfig(alpha=args.alpha, lambda1=args.lambda1, lambda2=args.lambda2, window_n=args.window_n,
                      epsilon=args.epsilon)


def _bundle(args, target, sources, k, scene, depth=None, poses=None, init_constant=2.0):
    return prepare_bundle(
        target, sources, k,
        keypoint_count=args.keypoints, window_n=args.window_n, seed=args.seed, min_area=args.min_area,
        seg_k=args.seg_k, seg_sigma=args.seg_sigma, seg_min_size=args.seg_min_size, grid_scale=args.grid_scale,
        depth=depth, init_depth=init_constant, poses=poses,
        labels=scene["labels"] if (scene is not None and args.gt_labels) else None,
    )


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    spec = default_scene(args.seed, args.width, args.height, n_sources=_n_sources(args))
    scene = make_scene(spec)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    imageio.save_image(out / "target.ppm", scene.target, bits=16)
    names = []
    for i, (img, depth) in enumerate(zip(scene.sources, scene.gt_depth[1:])):
        imageio.save_image(out / f"source_{i}.ppm", img, bits=16)
        imageio.save_pfm(out / f"gt_depth_source_{i}.pfm", depth)
        names.append(f"source_{i}.ppm")
    imageio.save_pfm(out / "gt_depth.pfm", scene.gt_depth[0])
    imageio.save_labels(out / "gt_labels.png", scene.gt_plane_labels)
    imageio.save_image(out / "target.png", scene.target)
    imageio.save_depth_preview(out / "gt_depth.png", scene.gt_depth[0])
    imageio.write_json(out / "intrinsics.json", spec.k.to_json())
    imageio.write_json(out / "poses.json", [p.to_json() for p in scene.gt_poses])
    imageio.write_json(out / "scene.json", spec.to_json())
    imageio.write_json(out / "scene_files.json", {
        "target": "target.ppm", "sources": names, "gt_depth": "gt_depth.pfm", "gt_labels": "gt_labels.png",
    })
    return 0


def cmd_keypoints(args) -> int:
    img = imageio.load_image(args.image)
    kps = select_keypoints(gradient_map(img), args.keypoints, block=args.block, margin=args.window_n + 1,
                           seed=args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "keypoints.csv").write_text(kps.to_csv())
    imageio.save_rgb8(args.out / "keypoints.png", imageio.keypoint_overlay(img, kps.points, kps.origin))
    return 0


def cmd_segment(args) -> int:
    img = imageio.load_image(args.image)
    labels = felzenszwalb_segment(img, k=args.seg_k, sigma=args.seg_sigma, min_size=args.seg_min_size)
    regions = large_regions(labels, args.min_area)
    args.out.mkdir(parents=True, exist_ok=True)
    imageio.save_labels(args.out / "labels.png", labels)
    imageio.save_rgb8(args.out / "overlay.png", imageio.label_overlay(img, labels, seed=args.seed))
    imageio.write_json(args.out / "regions.json", [{"id": int(r.id), "area": int(r.area)} for r in regions])
    return 0


def cmd_refine(args) -> int:
    target, sources, k, scene = _load_inputs(args)
    depth = None
    if args.init_depth is not None:
        depth = imageio.load_pfm(args.init_depth)
    elif args.init_gt_scale is not None:
        if scene is None:
            raise ValidationError("--init-gt-scale needs --scene")
        depth = args.init_gt_scale * scene["gt_depth"]
    poses = None
    if args.init_poses is not None:
        poses = _load_poses(args.init_poses)[: len(sources)]
    elif args.gt_poses:
        if scene is None:
            raise ValidationError("--gt-poses needs --scene")
        poses = scene["poses"]
    if depth is not None and depth.shape != target.shape[:2]:
        raise ValidationError(f"initial depth {depth.shape} does not match the target {target.shape[:2]}")
    bundle = _bundle(args, target, sources, k, scene, depth=depth, poses=poses, init_constant=args.init_constant)
    cfg = SolverConfig(iterations=args.iters, lr_depth=args.lr_depth, lr_pose=args.lr_pose,
                       weights=_loss_config(args), grid_scale=args.grid_scale, seed=args.seed,
                       optimize_poses=not args.fix_poses)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    final, state = refine(bundle, cfg)
    state.write_trace(out / "trace.jsonl")
    depth = final.depth()
    imageio.save_pfm(out / "depth.pfm", depth)
    imageio.save_depth_preview(out / "depth.png", depth)
    imageio.write_json(out / "poses.json", [p.to_json() for p in final.poses])
    imageio.write_json(out / "planes.json", region_planes(depth, final.regions, k, args.epsilon))
    if scene is not None:
        gt = scene["gt_depth"]
        metrics = {
            "depth": depth_metrics(depth, gt, median_scale=False).to_json(),
            "depth_median_scaled": depth_metrics(depth, gt, median_scale=True).to_json(),
            "poses": [pose_metrics(p, g).to_json() for p, g in zip(final.poses, scene["poses"])],
        }
        imageio.write_json(out / "metrics.json", metrics)
    return 0


def cmd_gradcheck(args) -> int:
    if args.scene is not None:
        target, sources, k, scene = _load_inputs(args)
    else:
        rendered = make_scene(default_scene(0, n_sources=_n_sources(args)))
        target, sources, k = rendered.target, rendered.sources, rendered.spec.k
        scene = {"gt_depth": rendered.gt_depth[0], "poses": rendered.gt_poses, "labels": rendered.gt_plane_labels}
    rng = np.random.default_rng(args.seed)
    gt = scene["gt_depth"]
    depth = gt * np.exp(args.perturb_depth * rng.standard_normal(gt.shape))
    poses = [pose_compose(se3_exp(rng.normal(scale=args.perturb_pose, size=6)), p) for p in scene["poses"]]
    bundle = _bundle(args, target, sources, k, scene, depth=depth, poses=poses)
    report = gradcheck(bundle, _loss_config(args), samples=args.samples, seed=args.seed, pin_branch=not args.no_pin)
    args.out.mkdir(parents=True, exist_ok=True)
    imageio.write_json(args.out / "gradcheck.json", report.to_json())
    print(f"max relative error {report.max_rel_error:.3e} ({'ok' if report.passed else 'FAILED'})")
    return 0 if report.passed else 2


def cmd_eval(args) -> int:
    pred = imageio.load_pfm(args.pred)
    gt = imageio.load_pfm(args.gt)
    if pred.shape != gt.shape:
        raise ValidationError(f"prediction {pred.shape} and ground truth {gt.shape} differ in shape")
    result = {"depth": depth_metrics(pred, gt, median_scale=not args.no_median_scale).to_json()}
    rows = {"depth": result["depth"]}
    if args.intrinsics is not None:
        k = _load_intrinsics(args.intrinsics)
        scale = 1.0 if args.no_median_scale else float(np.median(gt[gt > 0]) / np.median(pred[pred > 0]))
        n_pred = normals_from_depth(pred * scale, k, args.normal_window)
        n_gt = normals_from_depth(gt, k, args.normal_window)
        result["normals"] = normal_metrics(n_pred, n_gt).to_json()
        rows["normals"] = result["normals"]
    if args.pred_poses is not None and args.gt_pose_file is not None:
        preds, gts = _load_poses(args.pred_poses), _load_poses(args.gt_pose_file)
        result["poses"] = [pose_metrics(p, g).to_json() for p, g in zip(preds, gts)]
        for i, m in enumerate(result["poses"]):
            rows[f"pose_{i}"] = m
    flat = {f"{group}.{key}": val for group, vals in result.items() if isinstance(vals, dict) for key, val in vals.items()}
    for i, m in enumerate(result.get("poses", [])):
        flat.update({f"poses.{i}.{key}": val for key, val in m.items()})
    args.out.mkdir(parents=True, exist_ok=True)
    imageio.write_json(args.out / "metrics.json", flat)
    text = "".join(format_table({name: vals}) for name, vals in rows.items())
    (args.out / "metrics.txt").write_text(text)
    print(text, end="")
    return 0


HANDLERS = {
    "synth": cmd_synth,
    "keypoints": cmd_keypoints,
    "segment": cmd_segment,
    "refine": cmd_refine,
    "gradcheck": cmd_gradcheck,
    "eval": cmd_eval,
}


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    cfg = imageio.read_json(args.config)
    if cfg.get("command", args.command) != args.command:
        raise ValidationError(f"{args.config} is a `{cfg['command']}` config, not `{args.command}`")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions}
    unknown = set(cfg) - known - {"command"}
    if unknown:
        raise ValidationError(f"{args.config}: unknown options {sorted(unknown)}")
    sub.set_defaults(**{key: val for key, val in cfg.items() if key != "command"})
    return parser.parse_args(argv)


def run(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = parse_args(argv)
        _coerce_paths(args)
        _write_config(args)
        return HANDLERS[args.command](args)
    except (ValidationError, imageio.FormatError, ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericFailure, OverlapFailure, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2


def _coerce_paths(args) -> None:
    # values restored from a JSON config arrive as plain strings
    for action_dest in ("out", "scene", "target", "intrinsics", "image", "init_depth", "init_poses", "pred", "gt",
                        "pred_poses", "gt_pose_file"):
        val = getattr(args, action_dest, None)
        if isinstance(val, str):
            setattr(args, action_dest, Path(val))
    if isinstance(getattr(args, "sources", None), list):
        args.sources = [Path(s) for s in args.sources]


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
