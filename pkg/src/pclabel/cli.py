"""Command-line interface: run the pipeline, generate scenes, print statistics."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import scene, segment
from .detect_ingest import CLASS_NAME_TO_ID
from .pipeline import PipelineConfig, PipelineError, run_pipeline

_RUN_DEFAULTS = {
    "tol": 0.05,
    "conf": 0.0,
    "classes": [],
    "k": 3,
    "max_iter": 100,
    "seed": 0,
    "denoise": True,
    "distortion": False,
    "workers": 1,
}


def _parse_classes(tokens) -> frozenset[int]:
    ids = set()
    for token in tokens:
        for part in str(token).split(","):
            part = part.strip()
            if not part:
                continue
            if part.lstrip("-").isdigit():
                ids.add(int(part))
            elif part in CLASS_NAME_TO_ID:
                ids.add(CLASS_NAME_TO_ID[part])
            else:
                raise argparse.ArgumentTypeError(f"unknown class '{part}'")
    return frozenset(ids)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pclabel",
        description="Label LIDAR point clouds from 2D camera detections and "
        "denoise the labels with seeded k-means.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the labeling pipeline over a frame sequence")
    run.add_argument("--calib", help="calibration JSON file")
    run.add_argument("--clouds", help="cloud manifest file")
    run.add_argument("--dets", help="detection manifest file")
    run.add_argument("--out", help="output directory")
    run.add_argument("--config", help="JSON config file; flags override its values")
    run.add_argument("--tol", type=float, default=None, help="frame matching tolerance, seconds")
    run.add_argument("--conf", type=float, default=None, help="detection confidence threshold")
    run.add_argument("--classes", default=None, help="comma-separated class ids or names to keep")
    run.add_argument("--k", type=int, default=None, help="k-means cluster count")
    run.add_argument("--max-iter", type=int, default=None, help="k-means iteration cap")
    run.add_argument("--seed", type=int, default=None, help="k-means RNG seed")
    run.add_argument("--no-denoise", action="store_true", default=None, help="skip clustering")
    run.add_argument("--distortion", action="store_true", default=None,
                     help="apply lens distortion when projecting (raw-image boxes)")
    run.add_argument("--workers", type=int, default=None, help="worker thread count")

    gen = sub.add_parser("gen-scene", help="generate a synthetic scene with ground truth")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--frames", type=int, default=20)
    gen.add_argument("--objects", type=int, default=3, help="planted objects per frame")
    gen.add_argument("--noise", type=float, default=0.3, help="noise fraction of labeled points")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--cameras", type=int, default=5)
    gen.add_argument("--points-per-object", type=int, default=900)

    stats = sub.add_parser("stats", help="summarize a report CSV")
    stats.add_argument("csv", help="report CSV written by 'run'")
    stats.add_argument("--compare", help="second report CSV to diff against")
    return parser


def _merged_run_value(file_cfg: dict, key: str, arg_value):
    if arg_value is not None:
        return arg_value
    if key in file_cfg:
        return file_cfg[key]
    return _RUN_DEFAULTS.get(key)


def _run_command(args) -> int:
    file_cfg = {}
    if args.config:
        file_cfg = json.loads(Path(args.config).read_text())
        unknown = set(file_cfg) - {"calib", "clouds", "dets", "out", *_RUN_DEFAULTS}
        if unknown:
            print(f"error: unknown config keys {sorted(unknown)}", file=sys.stderr)
            return 2
    required = {}
    for key, arg in (("calib", args.calib), ("clouds", args.clouds),
                     ("dets", args.dets), ("out", args.out)):
        value = arg if arg is not None else file_cfg.get(key)
        if value is None:
            print(f"error: --{key} is required (flag or config file)", file=sys.stderr)
            return 2
        required[key] = value

    denoise = _merged_run_value(file_cfg, "denoise", None if args.no_denoise is None else False)
    classes_raw = _merged_run_value(file_cfg, "classes", args.classes)
    try:
        classes = _parse_classes([classes_raw] if isinstance(classes_raw, str) else classes_raw)
    except argparse.ArgumentTypeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    cfg = PipelineConfig(
        calibration=Path(required["calib"]),
        cloud_manifest=Path(required["clouds"]),
        detection_manifest=Path(required["dets"]),
        out_dir=Path(required["out"]),
        tolerance=float(_merged_run_value(file_cfg, "tol", args.tol)),
        confidence=float(_merged_run_value(file_cfg, "conf", args.conf)),
        classes=classes,
        kmeans=segment.KMeansConfig(
            k=int(_merged_run_value(file_cfg, "k", args.k)),
            max_iter=int(_merged_run_value(file_cfg, "max_iter", args.max_iter)),
            seed=int(_merged_run_value(file_cfg, "seed", args.seed)),
        ),
        distortion=bool(_merged_run_value(file_cfg, "distortion", args.distortion)),
        denoise=bool(denoise),
        workers=int(_merged_run_value(file_cfg, "workers", args.workers)),
    )
    try:
        result = run_pipeline(cfg)
    except (PipelineError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(result.summary.render())
    if result.frames:
        times = [f.seconds for f in result.frames]
        print(
            f"frame time: mean {sum(times) / len(times):.3f} s, "
            f"max {max(times):.3f} s, total {result.total_seconds:.3f} s"
        )
    print(f"outputs written to {cfg.out_dir}")
    return 0


def _gen_scene_command(args) -> int:
    rig = scene.default_rig(args.cameras)
    try:
        paths = scene.gen_scene(
            args.out,
            frames=args.frames,
            objects=args.objects,
            noise_fraction=args.noise,
            seed=args.seed,
            rig=rig,
            points_per_object=args.points_per_object,
        )
    except (scene.SceneError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"scene written to {paths.out_dir}")
    print(f"  calibration:        {paths.calibration}")
    print(f"  cloud manifest:     {paths.cloud_manifest}")
    print(f"  detection manifest: {paths.detection_manifest}")
    print(f"  ground truth:       {paths.ground_truth}")
    print(f"  frames: {paths.n_frames}, objects per frame: {paths.n_objects}")
    return 0


def _stats_command(args) -> int:
    try:
        reports = segment.read_report_csv(args.csv)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    summary = segment.aggregate_reports(reports)
    print(summary.render())
    if args.compare:
        try:
            other = segment.read_report_csv(args.compare)
        except (OSError, ValueError) as e:
            print(f"error: {e}", file=sys.stderr)
            return 1
        by_frame = {r.frame_id: r for r in other}
        print(f"\ncomparison against {args.compare}:")
        print("frame  labeled_a  kept_a  labeled_b  kept_b  kept_delta")
        for r in reports:
            o = by_frame.get(r.frame_id)
            if o is None:
                print(f"{r.frame_id:5d}  missing from second report")
                continue
            print(
                f"{r.frame_id:5d}  {r.labeled_before:9d}  {r.kept_after:6d}  "
                f"{o.labeled_before:9d}  {o.kept_after:6d}  {r.kept_after - o.kept_after:10d}"
            )
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _run_command(args)
    if args.command == "gen-scene":
        return _gen_scene_command(args)
    return _stats_command(args)


if __name__ == "__main__":
    sys.exit(main())
