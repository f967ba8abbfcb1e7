"""Command line front end.

Subcommands: project, cluster, classify, evaluate, bench, gen-weights,
export.  Every run reads one INI config file (all defaults work without
one) plus repeatable ``--set section.key=value`` overrides, so an
experiment is replayable from its command line.  Exit codes: 0 success,
1 partial or total scan failure, 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import cnn, pipeline, proposals, rangeimage, report
from .pipeline import InvalidConfigError, PipelineConfig, load_config
from .pointcloud import ClassMap, FormatError, load_labels, load_scan

log = logging.getLogger("lidarpatch")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", "-c", help="INI config file")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="SECTION.KEY=VALUE", help="override a config entry")
    p.add_argument("--root", help="dataset root (overrides data.root)")
    p.add_argument("--sequence", help="sequence id (overrides data.sequence)")
    p.add_argument("--scans", help="comma list of scan ids or 'all'")
    p.add_argument("--model", help="weight file (overrides model.weights)")
    p.add_argument("--workers", type=int, help="worker count")
    p.add_argument("--source", choices=["cluster", "gt"],
                   help="instance source (overrides run.instance_source)")


def _config_from_args(args) -> PipelineConfig:
    overrides = list(args.overrides)
    for flag, target in (("root", "data.root"), ("sequence", "data.sequence"),
                         ("scans", "data.scans"), ("model", "model.weights"),
                         ("workers", "run.workers"),
                         ("source", "run.instance_source")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides.append(f"{target}={value}")
    return load_config(args.config, overrides)


def cmd_project(args) -> int:
    cfg = _config_from_args(args)
    entries = pipeline.discover_scans(cfg)
    if not entries:
        log.error("no scans selected")
        return 1
    failed = 0
    for sid, scan_path, _ in entries:
        try:
            scan = load_scan(scan_path)
            img = rangeimage.project(scan, cfg.projection)
            if cfg.channels.wants_normals():
                img = rangeimage.compute_normal_images(img)
            fill = img.mask.mean()
            print(f"{sid}: {len(scan)} points -> {img.shape[0]}x{img.shape[1]} "
                  f"grid, {fill:.1%} filled, {img.n_dropped} dropped")
            if args.npz:
                out = Path(args.npz)
                out.mkdir(parents=True, exist_ok=True)
                stack = rangeimage.select_channels(img, cfg.channels)
                np.savez_compressed(out / f"{sid}.npz", stack=stack,
                                    pixel_to_point=img.pixel_to_point)
        except (FormatError, OSError) as exc:
            log.error("scan %s failed: %s", sid, exc)
            failed += 1
    return 1 if failed else 0


def cmd_cluster(args) -> int:
    cfg = _config_from_args(args)
    entries = pipeline.discover_scans(cfg)
    if not entries:
        log.error("no scans selected")
        return 1
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    class_map = (ClassMap.load(cfg.class_map_path) if cfg.class_map_path
                 else ClassMap.default())
    failed = 0
    for sid, scan_path, label_path in entries:
        try:
            scan = load_scan(scan_path)
            img = rangeimage.project(scan, cfg.projection)
            if cfg.instance_source == "gt":
                if label_path is None:
                    raise InvalidConfigError(f"{sid}: gt mode needs labels")
                labeled = load_labels(label_path, scan)
                props = proposals.gt_instances(labeled, img, class_map)
            else:
                ground = proposals.remove_ground(img, cfg.ground)
                props = proposals.cluster(img, ground, cfg.cluster)
            proposals.save_proposals(props, out_dir / f"{sid}.txt")
            print(f"{sid}: {len(props)} proposals")
        except (FormatError, InvalidConfigError, OSError) as exc:
            log.error("scan %s failed: %s", sid, exc)
            failed += 1
    return 1 if failed else 0


def cmd_classify(args) -> int:
    cfg = _config_from_args(args)
    outcome = pipeline.run_pipeline(
        cfg, out_dir=args.out, dump_patches=args.dump_patches,
        with_metrics=False)
    for res in outcome.results:
        print(f"{res.scan_id}: {len(res.detections)} detections "
              f"({res.n_points} points)")
    return outcome.exit_code


def cmd_evaluate(args) -> int:
    cfg = _config_from_args(args)
    outcome = pipeline.run_pipeline(
        cfg, out_dir=args.out, dump_patches=args.dump_patches,
        with_metrics=True)
    if outcome.report is not None and outcome.results:
        print(outcome.report.format_tables())
        if args.out:
            written = report.write_report(outcome.report, Path(args.out))
            print("report files: " + " ".join(str(p) for p in written))
    return outcome.exit_code


def cmd_bench(args) -> int:
    cfg = _config_from_args(args)
    if args.model_seed is not None:
        model = cnn.init_random(args.model_seed)
    else:
        if not cfg.model_path:
            raise InvalidConfigError("bench needs model.weights or --model-seed")
        model = cnn.load_weights(cfg.model_path)
    result = pipeline.bench(model, n_instances=args.instances,
                            n_threads=args.threads,
                            repetitions=args.repetitions)
    print(result.format())
    return 0


def cmd_gen_weights(args) -> int:
    cfg = _config_from_args(args)
    meta = cnn.ModelMeta(channels=tuple(cfg.channels.names()),
                         patch_side=cfg.patch_side)
    model = cnn.init_random(args.seed, meta)
    cnn.save_weights(model, args.out)
    print(f"wrote {args.out}: {cnn.param_count(model)} parameters, "
          f"channels {','.join(meta.channels)}, patch {meta.patch_side}")
    return 0


def cmd_export(args) -> int:
    cfg = _config_from_args(args)
    entries = pipeline.discover_scans(cfg)
    if not entries:
        log.error("no scans selected")
        return 1
    failed = 0
    for sid, scan_path, _ in entries:
        try:
            scan = load_scan(scan_path)
            img = rangeimage.project(scan, cfg.projection)
            if cfg.channels.wants_normals():
                img = rangeimage.compute_normal_images(img)
            written = rangeimage.export_channel_images(
                img, cfg.channels, args.out, sid)
            print(f"{sid}: wrote {len(written)} channel images")
        except (FormatError, OSError) as exc:
            log.error("scan %s failed: %s", sid, exc)
            failed += 1
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lidarpatch",
        description="CPU Lidar instance classification on range images")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("project", help="project scans, print grid stats")
    _add_common(p)
    p.add_argument("--npz", help="directory for channel-stack npz dumps")
    p.set_defaults(fn=cmd_project)

    p = sub.add_parser("cluster", help="write instance proposals per scan")
    _add_common(p)
    p.add_argument("--out", "-o", required=True, help="output directory")
    p.set_defaults(fn=cmd_cluster)

    p = sub.add_parser("classify", help="run the full pipeline, no metrics")
    _add_common(p)
    p.add_argument("--out", "-o", help="output directory for detections")
    p.add_argument("--dump-patches", action="store_true",
                   help="write LPCH patch dumps next to detections")
    p.set_defaults(fn=cmd_classify)

    p = sub.add_parser("evaluate", help="run the pipeline and score it")
    _add_common(p)
    p.add_argument("--out", "-o", help="output directory for the report")
    p.add_argument("--dump-patches", action="store_true")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("bench", help="inference timing on synthetic patches")
    _add_common(p)
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--threads", type=int, default=0,
                   help="BLAS thread cap, 0 = unlimited")
    p.add_argument("--repetitions", type=int, default=20)
    p.add_argument("--model-seed", type=int, default=None,
                   help="bench a random model instead of model.weights")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("gen-weights", help="write a seeded random model")
    _add_common(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", "-o", required=True, help="weight file path")
    p.set_defaults(fn=cmd_gen_weights)

    p = sub.add_parser("export", help="write channel images per scan")
    _add_common(p)
    p.add_argument("--out", "-o", required=True, help="output directory")
    p.set_defaults(fn=cmd_export)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except InvalidConfigError as exc:
        log.error("invalid config: %s", exc)
        return 2
    except cnn.WeightFormatError as exc:
        log.error("weight file rejected: %s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
