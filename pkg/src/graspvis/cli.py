"""Command-line front end.

Subcommands mirror the pipeline roles: `simulate` renders synthetic
captures to files, `plan` turns one capture into a grasp plan, `stream`
publishes frames, `run` consumes and localizes, `eval` sweeps the
camera-pose grid, `bench` times the stages and `transit` measures wire
latency. Options come from an optional TOML/JSON config file with flag
overrides on top.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import cv2
import numpy as np

from . import __version__
from .cloud import build_cloud, radius_outlier_removal, voxel_downsample
from .errors import GraspVisError
from .geometry import Intrinsics
from .graspplan import plan_grasp, write_plan
from .imaging import ColorFrame, DepthFrame, FramePair, SegMask
from .pipeline import (
    STUDY_FILTER_PARAMS,
    PipelineConfig,
    TargetLocalizer,
    evaluate_localization,
    load_config,
    run_stream,
)
from .segmentation import GroundTruthProvider, ProviderConfig
from .simulator import (
    DEFAULT_EVAL_INTRINSICS,
    Scene,
    bear_scene,
    bottle_scene,
    camera_pose_at,
    pose_grid,
    render,
)
from .transport import FramePublisher, measure_transit

_BUILTIN_SCENES = {"bottle": bottle_scene, "bear": bear_scene}

# Field-study reference figures from the original flight hardware
# (real sensor, neural masks, LAN). Printed for context, never asserted.
FIELD_REFERENCE = {
    "bottle_rmse_cm": {"x": 1.3, "y": 2.7, "z": 4.5},
    "bear_rmse_cm": {"x": 6.2, "y": 2.9, "z": 1.7},
    "lan_transit_mean_ms": 41.0,
}


def _load_scene(args) -> Scene:
    if args.scene:
        return Scene.load(args.scene)
    return _BUILTIN_SCENES[args.builtin]()


def _scene_flags(parser):
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--scene", help="scene JSON file")
    group.add_argument("--builtin", choices=sorted(_BUILTIN_SCENES), default="bottle",
                       help="built-in scene (default: bottle)")


def _camera_flags(parser):
    parser.add_argument("--camera", nargs=3, type=float, metavar=("X", "Y", "Z"),
                        default=(-1.2, 0.0, 0.0),
                        help="camera position in world, view along +x (default: -1.2 0 0)")
    parser.add_argument("--noise", type=float, default=0.0, help="depth noise sigma in meters")
    parser.add_argument("--seed", type=int, default=0, help="noise seed")


def _config_flags(parser):
    parser.add_argument("--config", help="pipeline config (.toml or .json)")
    parser.add_argument("--target", action="append", default=None,
                        help="target class filter; repeatable")
    parser.add_argument("--min-score", type=float, default=None, help="detection score floor")
    parser.add_argument("--slab", type=float, default=None, help="candidate slab thickness in meters")


def _build_config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    provider = cfg.provider
    if args.target is not None:
        provider = replace(provider, target_classes=tuple(args.target))
    if args.min_score is not None:
        provider = replace(provider, min_score=args.min_score)
    slab = cfg.slab_thickness if args.slab is None else args.slab
    return PipelineConfig(
        provider=provider,
        filters=cfg.filters,
        assumptions=cfg.assumptions,
        slab_thickness=slab,
        extrinsics=cfg.extrinsics,
    )


def _write_color_png(path, frame: ColorFrame) -> None:
    cv2.imwrite(str(path), frame.pixels[:, :, ::-1])


def _read_intrinsics(path) -> Intrinsics:
    return Intrinsics.from_json(Path(path).read_text())


def _cmd_simulate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scene = _load_scene(args)
    pose = camera_pose_at(args.camera)
    rng = np.random.default_rng(args.seed)
    pair, truth = render(scene, pose, DEFAULT_EVAL_INTRINSICS,
                         depth_noise_sigma=args.noise, rng=rng,
                         sequence=0, timestamp=time.time_ns())
    _write_color_png(out / "color.png", pair.color)
    cv2.imwrite(str(out / "depth.png"), pair.depth.values)
    (out / "intrinsics.json").write_text(pair.intrinsics.to_json())
    (out / "scene.json").write_text(scene.to_json())
    for k, label in enumerate(truth.labels):
        mask = truth.mask_for(k)
        name = "mask.png" if k == 0 else f"mask_{k}.png"
        cv2.imwrite(str(out / name), mask.bits.astype(np.uint8) * 255)
    (out / "truth.json").write_text(json.dumps({
        "labels": list(truth.labels),
        "centroids": [list(map(float, c)) for c in truth.centroids],
        "axes": [list(map(float, a)) for a in truth.axes],
        "camera_position": list(map(float, pose.translation)),
    }, indent=2, sort_keys=True))
    print(f"wrote capture of {len(truth.labels)} object(s) to {out}")
    return 0


def _cmd_plan(args) -> int:
    cfg = _build_config(args)
    if not args.config:
        # captures from `simulate` come off the wide-FOV eval camera;
        # match the cleanup to its pixel-ray spacing unless a config
        # says otherwise
        cfg = replace(cfg, filters=STUDY_FILTER_PARAMS)
    color_bgr = cv2.imread(str(args.color), cv2.IMREAD_COLOR)
    if color_bgr is None:
        print(f"error: cannot read color image {args.color}", file=sys.stderr)
        return 2
    depth_raw = cv2.imread(str(args.depth), cv2.IMREAD_UNCHANGED)
    if depth_raw is None or depth_raw.dtype != np.uint16 or depth_raw.ndim != 2:
        print(f"error: {args.depth} is not a 16-bit single-channel depth image", file=sys.stderr)
        return 2
    mask_img = cv2.imread(str(args.mask), cv2.IMREAD_UNCHANGED)
    if mask_img is None:
        print(f"error: cannot read mask image {args.mask}", file=sys.stderr)
        return 2
    if mask_img.ndim == 3:
        mask_img = mask_img[:, :, 0]
    intr = _read_intrinsics(args.intrinsics)

    pair = FramePair(
        color=ColorFrame(np.ascontiguousarray(color_bgr[:, :, ::-1])),
        depth=DepthFrame(depth_raw),
        intrinsics=intr,
    )
    mask = SegMask(mask_img > 0, class_label=args.label, score=1.0)
    cloud = build_cloud(pair, mask, cfg.filters)
    cloud = radius_outlier_removal(cloud, cfg.filters.outlier_radius, cfg.filters.outlier_min_neighbors)
    cloud = voxel_downsample(cloud, cfg.filters.voxel_size)
    plan = plan_grasp(cloud, cfg.assumptions, cfg.slab_thickness)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sidecar = write_plan(plan, out / "plan.json")
    c, a = plan.centroid, plan.axis
    print(f"centroid [m]: ({c[0]:+.4f}, {c[1]:+.4f}, {c[2]:+.4f})  camera frame")
    print(f"axis:         ({a[0]:+.4f}, {a[1]:+.4f}, {a[2]:+.4f})")
    print(f"candidates:   {len(plan.candidates)} of {plan.source_count} cleaned points")
    print(f"wrote {out / 'plan.json'} and {sidecar.name}")
    return 0


def _frame_source(scene, pose, intrinsics, noise, seed, frames, rate_hz):
    rng = np.random.default_rng(seed)
    period = 1.0 / rate_hz if rate_hz > 0 else 0.0
    k = 0
    while frames <= 0 or k < frames:
        pair, _ = render(scene, pose, intrinsics, depth_noise_sigma=noise,
                         rng=rng, sequence=k, timestamp=time.time_ns())
        yield pair
        k += 1
        if period:
            time.sleep(period)


def _cmd_stream(args) -> int:
    scene = _load_scene(args)
    pose = camera_pose_at(args.camera)
    source = _frame_source(scene, pose, DEFAULT_EVAL_INTRINSICS,
                           args.noise, args.seed, args.frames, args.rate)
    publisher = FramePublisher(source, args.endpoint,
                               jpeg_quality=args.quality, png_level=args.png_level)
    publisher.start()
    # flush so a redirected log shows the bound port while serving
    print(f"serving frames on {publisher.endpoint} "
          f"({'unlimited' if args.frames <= 0 else args.frames} frames at {args.rate} Hz)",
          flush=True)
    try:
        while publisher.running:
            time.sleep(0.2)
    except KeyboardInterrupt:
        pass
    finally:
        publisher.stop()
    print("stream finished")
    return 0


def _cmd_run(args) -> int:
    cfg = _build_config(args)
    if cfg.provider.kind != "remote":
        print("error: run needs a remote segmentation provider in the config; "
              "the ground-truth provider only works in-process (see eval)", file=sys.stderr)
        return 2
    out_fh = open(args.out, "w") if args.out else None
    count = 0

    def emit(est):
        nonlocal count
        count += 1
        c = est.world_centroid
        line = {
            "sequence": est.sequence,
            "class": est.class_label,
            "world_centroid": [round(float(v), 6) for v in c],
            "visible_centroid": [round(float(v), 6) for v in est.visible_centroid],
            "cloud_points": est.cloud_points,
            "timings_ms": {
                "decode": round(est.timings.decode_ms, 3),
                "detect": round(est.timings.detect_ms, 3),
                "cloud": round(est.timings.cloud_ms, 3),
                "plan": round(est.timings.plan_ms, 3),
            },
        }
        print(f"seq {est.sequence}: {est.class_label} at "
              f"({c[0]:+.3f}, {c[1]:+.3f}, {c[2]:+.3f}) m "
              f"[{est.timings.total_ms:.1f} ms]", flush=True)
        if out_fh:
            out_fh.write(json.dumps(line, sort_keys=True) + "\n")

    try:
        run_stream(args.endpoint, cfg, max_frames=args.frames,
                   timeout=args.timeout, on_estimate=emit)
    finally:
        if out_fh:
            out_fh.close()
    print(f"{count} estimate(s)")
    return 0


def _cmd_eval(args) -> int:
    cfg = _build_config(args)
    if not args.config:
        cfg = PipelineConfig(
            provider=cfg.provider, filters=STUDY_FILTER_PARAMS,
            assumptions=cfg.assumptions, slab_thickness=cfg.slab_thickness,
            extrinsics=cfg.extrinsics,
        )
    scene = _load_scene(args)
    x0, x1, nx, y0, y1, ny = args.grid
    poses = pose_grid((x0, x1), (y0, y1), (int(nx), int(ny)), height=args.height)
    study = evaluate_localization(scene, poses, cfg,
                                  depth_noise_sigma=args.noise, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "localization.csv"
    study.to_csv(csv_path)

    ok = len(study.ok_rows)
    rmse = study.rmse(corrected=True)
    raw_rmse = study.rmse(corrected=False)
    print(f"poses: {len(study.rows)}  localized: {ok}")
    print(f"corrected RMSE [cm]: x={rmse[0] * 100:.2f}  y={rmse[1] * 100:.2f}  z={rmse[2] * 100:.2f}")
    print(f"visible  RMSE [cm]: x={raw_rmse[0] * 100:.2f}  y={raw_rmse[1] * 100:.2f}  z={raw_rmse[2] * 100:.2f}")
    ref = FIELD_REFERENCE["bottle_rmse_cm"]
    print(f"flight-hardware reference (bottle, real sensor): "
          f"x={ref['x']}  y={ref['y']}  z={ref['z']} cm (context only)")
    print(f"wrote {csv_path}")
    return 0


def _cmd_bench(args) -> int:
    from .transport import wire_from_pair

    scene = _load_scene(args)
    pose = camera_pose_at(args.camera)
    pair, truth = render(scene, pose, DEFAULT_EVAL_INTRINSICS,
                         depth_noise_sigma=args.noise,
                         rng=np.random.default_rng(args.seed), timestamp=1)
    registry = GroundTruthProvider()
    registry.register(pair.color, truth)
    cfg = _build_config(args)
    cfg = PipelineConfig(
        provider=ProviderConfig(kind="ground_truth",
                                target_classes=cfg.provider.target_classes,
                                min_score=cfg.provider.min_score),
        filters=cfg.filters if args.config else STUDY_FILTER_PARAMS,
        assumptions=cfg.assumptions,
        slab_thickness=cfg.slab_thickness, extrinsics=cfg.extrinsics,
    )
    localizer = TargetLocalizer(cfg, registry=registry)
    wire = wire_from_pair(pair)

    stages = {"decode": [], "detect": [], "cloud": [], "plan": [], "decode_cloud_plan": []}
    for _ in range(args.frames):
        est = localizer.process_wire(wire)
        t = est.timings
        stages["decode"].append(t.decode_ms)
        stages["detect"].append(t.detect_ms)
        stages["cloud"].append(t.cloud_ms)
        stages["plan"].append(t.plan_ms)
        stages["decode_cloud_plan"].append(t.decode_ms + t.cloud_ms + t.plan_ms)

    budgets = {}
    if args.budgets:
        budgets = json.loads(Path(args.budgets).read_text()).get("stage_p95_ms", {})
    failed = False
    print(f"{args.frames} frames, {pair.color.width}x{pair.color.height}")
    print(f"{'stage':<18}{'mean ms':>10}{'p95 ms':>10}{'budget':>10}")
    report = {}
    for name, values in stages.items():
        arr = np.array(values)
        p95 = float(np.percentile(arr, 95))
        budget = budgets.get(name)
        verdict = ""
        if budget is not None:
            over = p95 > budget
            failed = failed or over
            verdict = "  OVER" if over else "  ok"
        print(f"{name:<18}{arr.mean():>10.2f}{p95:>10.2f}"
              f"{budget if budget is not None else '-':>10}{verdict}")
        report[name] = {"mean_ms": round(float(arr.mean()), 3), "p95_ms": round(p95, 3)}
    if args.out:
        Path(args.out).write_text(json.dumps({"stages": report}, indent=2, sort_keys=True))
        print(f"wrote {args.out}")
    return 1 if failed else 0


def _cmd_transit(args) -> int:
    study = measure_transit(args.endpoint, args.count, timeout=args.timeout)
    s = study.summary
    print(f"{s.count} transfers: mean {s.mean_ms:.2f} ms  "
          f"p50 {s.p50_ms:.2f}  p95 {s.p95_ms:.2f}  p99 {s.p99_ms:.2f}")
    print(f"flight-hardware LAN reference: {FIELD_REFERENCE['lan_transit_mean_ms']} ms mean (context only)")
    if args.out:
        study.to_csv(args.out)
        print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graspvis",
        description="RGB-D target localization and grasp planning toolkit",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a synthetic capture to files")
    _scene_flags(p)
    _camera_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("plan", help="plan a grasp from one captured pair plus mask")
    p.add_argument("--color", required=True)
    p.add_argument("--depth", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--label", default="object", help="class label for the plan record")
    p.add_argument("--out", required=True, help="output directory")
    _config_flags(p)
    p.set_defaults(fn=_cmd_plan)

    p = sub.add_parser("stream", help="publish rendered frames over request-reply")
    _scene_flags(p)
    _camera_flags(p)
    p.add_argument("--endpoint", default="tcp://127.0.0.1:5560")
    p.add_argument("--frames", type=int, default=0,
                   help="frame count, 0 = unlimited; the process exits once a "
                        "consumer requests past the final frame (Ctrl-C otherwise)")
    p.add_argument("--rate", type=float, default=30.0, help="production rate in Hz")
    p.add_argument("--quality", type=int, default=95, help="JPEG quality")
    p.add_argument("--png-level", type=int, default=2, help="PNG compression level")
    p.set_defaults(fn=_cmd_stream)

    p = sub.add_parser("run", help="consume a frame stream and localize targets")
    p.add_argument("--endpoint", required=True)
    p.add_argument("--frames", type=int, default=10, help="estimates to produce")
    p.add_argument("--timeout", type=float, default=5.0)
    p.add_argument("--out", help="JSONL estimates file")
    _config_flags(p)
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("eval", help="localization accuracy over a camera-pose grid")
    _scene_flags(p)
    p.add_argument("--grid", nargs=6, type=float,
                   metavar=("X0", "X1", "NX", "Y0", "Y1", "NY"),
                   default=(0.6, 1.8, 7, -1.5, 1.5, 6),
                   help="standoff and lateral ranges with step counts (default: 0.6 1.8 7 -1.5 1.5 6)")
    p.add_argument("--height", type=float, default=0.0, help="camera height")
    p.add_argument("--noise", type=float, default=0.0, help="depth noise sigma in meters")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    _config_flags(p)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("bench", help="per-stage latency against the budget file")
    _scene_flags(p)
    _camera_flags(p)
    p.add_argument("--frames", type=int, default=50)
    p.add_argument("--budgets", help="budget JSON file (stage_p95_ms table)")
    p.add_argument("--out", help="write the measured report as JSON")
    _config_flags(p)
    p.set_defaults(fn=_cmd_bench)

    p = sub.add_parser("transit", help="measure request-to-decode latency of a stream")
    p.add_argument("--endpoint", required=True)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--timeout", type=float, default=5.0)
    p.add_argument("--out", help="CSV output file")
    p.set_defaults(fn=_cmd_transit)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except GraspVisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
