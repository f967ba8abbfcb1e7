"""End-to-end orchestration: config, per-scan processing, benchmarking.

A run walks each selected scan through load -> project -> normals ->
ground/cluster (or ground-truth instances) -> patches + statistics ->
batch inference -> per-point label painting, optionally accumulating
metrics when annotations are available.  Scans are independent; a worker
pool may process them concurrently and results are merged in scan-id
order so outputs do not depend on the worker count.
"""

from __future__ import annotations

import configparser
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from statistics import mean, median

import numpy as np

from . import cnn, features, metrics, proposals, rangeimage
from .pointcloud import ClassId, ClassMap, load_labels, load_scan
from .rangeimage import ChannelConfig, ProjectionConfig

log = logging.getLogger("lidarpatch")


class InvalidConfigError(ValueError):
    """Configuration errors; the CLI maps these to exit code 2."""


@dataclass(frozen=True)
class PipelineConfig:
    projection: ProjectionConfig = ProjectionConfig()
    channels: ChannelConfig = ChannelConfig()
    ground: proposals.GroundParams = proposals.GroundParams()
    cluster: proposals.ClusterParams = proposals.ClusterParams()
    patch_side: int = 32
    model_path: str = ""
    class_map_path: str = ""  # empty -> shipped default table
    dataset_root: str = ""
    sequence: str = ""
    scans: str = "all"
    workers: int = 1
    instance_source: str = "cluster"  # "cluster" | "gt"

    def __post_init__(self):
        if self.instance_source not in ("cluster", "gt"):
            raise InvalidConfigError(
                f"instance_source must be cluster or gt, got {self.instance_source!r}")
        if self.workers < 1:
            raise InvalidConfigError("workers must be >= 1")


def _apply_overrides(parser: configparser.ConfigParser,
                     overrides: list[str]) -> None:
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise InvalidConfigError(
                f"override {item!r} must look like section.key=value")
        target, value = item.split("=", 1)
        section, key = target.split(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section.strip(), key.strip(), value.strip())


def load_config(path: str | Path | None = None,
                overrides: list[str] | None = None) -> PipelineConfig:
    """Read the INI config file, then apply section.key=value overrides."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if path is not None:
        read = parser.read(str(path))
        if not read:
            raise InvalidConfigError(f"config file not readable: {path}")
    _apply_overrides(parser, overrides or [])

    try:
        proj = ProjectionConfig(
            height=parser.getint("projection", "height", fallback=64),
            width=parser.getint("projection", "width", fallback=2048),
            fov_up=parser.getfloat("projection", "fov_up", fallback=3.0),
            fov_down=parser.getfloat("projection", "fov_down", fallback=-25.0),
        )
        channel_names = parser.get("channels", "names",
                                   fallback="intensity hnv vnv")
        chans = ChannelConfig.from_names(channel_names)
        ground = proposals.GroundParams(
            max_ground_angle=parser.getfloat("ground", "max_ground_angle",
                                             fallback=10.0))
        clus = proposals.ClusterParams(
            merge_angle_threshold=parser.getfloat(
                "cluster", "merge_angle_threshold", fallback=10.0),
            min_points=parser.getint("cluster", "min_points", fallback=20),
        )
        return PipelineConfig(
            projection=proj,
            channels=chans,
            ground=ground,
            cluster=clus,
            patch_side=parser.getint("features", "patch_side", fallback=32),
            model_path=parser.get("model", "weights", fallback=""),
            class_map_path=parser.get("data", "class_map", fallback=""),
            dataset_root=parser.get("data", "root", fallback=""),
            sequence=parser.get("data", "sequence", fallback=""),
            scans=parser.get("data", "scans", fallback="all"),
            workers=parser.getint("run", "workers", fallback=1),
            instance_source=parser.get("run", "instance_source",
                                       fallback="cluster"),
        )
    except (ValueError, configparser.Error) as exc:
        raise InvalidConfigError(str(exc)) from exc


def discover_scans(cfg: PipelineConfig) -> list[tuple[str, Path, Path | None]]:
    """(scan_id, scan_path, label_path or None) sorted by scan id.

    Uses the sequences/<seq>/velodyne layout when present, otherwise a
    flat directory of .bin files with .label siblings.
    """
    root = Path(cfg.dataset_root)
    if not root.is_dir():
        raise InvalidConfigError(f"dataset root not found: {root}")
    seq_dir = root / "sequences" / cfg.sequence if cfg.sequence else root
    scan_dir = seq_dir / "velodyne"
    label_dir = seq_dir / "labels"
    if not scan_dir.is_dir():
        scan_dir = seq_dir
        label_dir = seq_dir

    wanted = None
    if cfg.scans.strip().lower() != "all":
        wanted = {s.strip() for s in cfg.scans.split(",") if s.strip()}

    out = []
    for path in sorted(scan_dir.glob("*.bin")):
        sid = path.stem
        if wanted is not None and sid not in wanted:
            continue
        label = label_dir / f"{sid}.label"
        out.append((sid, path, label if label.is_file() else None))
    return out


@dataclass
class Detection:
    instance_id: int
    class_id: ClassId
    confidence: float
    point_indices: np.ndarray


@dataclass
class ScanResult:
    scan_id: str
    n_points: int
    detections: list[Detection]
    pred_labels: np.ndarray               # (N,) painted class ids
    gt_labels: np.ndarray | None          # (N,) remapped annotations
    pred_instances: list[metrics.Instance]
    gt_instances: list[metrics.Instance]
    timings: dict[str, float]
    batch: features.Batch | None = None   # retained when dumping patches


def _paint(n_points: int, dets: list[Detection]) -> np.ndarray:
    labels = np.zeros(n_points, dtype=np.uint8)
    for det in dets:
        labels[det.point_indices] = int(det.class_id)
    return labels


def process_scan(scan_path: Path, label_path: Path | None,
                 cfg: PipelineConfig, class_map: ClassMap,
                 classifier_fn, keep_batch: bool = False) -> ScanResult:
    """Run the full per-scan pipeline.

    classifier_fn maps a Batch to (N, 5) class probabilities; the ground
    truth instance source requires a label file.
    """
    timings: dict[str, float] = {}

    def timed(stage):
        class _T:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                timings[stage] = timings.get(stage, 0.0) + \
                    time.perf_counter() - self.t0
        return _T()

    with timed("load"):
        scan = load_scan(scan_path)
        labeled = load_labels(label_path, scan) if label_path else None

    with timed("project"):
        img = rangeimage.project(scan, cfg.projection)
    with timed("normals"):
        if cfg.channels.wants_normals():
            img = rangeimage.compute_normal_images(img)

    if cfg.instance_source == "gt":
        if labeled is None:
            raise InvalidConfigError(
                f"{scan_path}: ground-truth instance mode needs a label file")
        with timed("instances"):
            props = proposals.gt_instances(labeled, img, class_map)
    else:
        with timed("instances"):
            ground = proposals.remove_ground(img, cfg.ground)
            props = proposals.cluster(img, ground, cfg.cluster)

    stack = rangeimage.select_channels(img, cfg.channels)

    dets: list[Detection] = []
    pred_instances: list[metrics.Instance] = []
    batch = None
    if props:
        with timed("features"):
            batch = features.make_batch(props, stack, scan, cfg.patch_side)
        with timed("forward"):
            probs = classifier_fn(batch)
        for i, prop in enumerate(props):
            cls, conf = cnn.predict(probs[i])
            if cls == ClassId.NONE:
                continue  # suppressed, points stay None-labeled
            inst_id = prop.gt_instance_id if prop.gt_instance_id is not None else i
            dets.append(Detection(
                instance_id=int(inst_id), class_id=cls,
                confidence=conf, point_indices=prop.point_indices))
            pred_instances.append(metrics.Instance(
                points=prop.point_set, class_id=cls))

    pred_labels = _paint(len(scan), dets)

    gt_labels = None
    gt_insts: list[metrics.Instance] = []
    if labeled is not None:
        gt_labels = class_map.remap(labeled.semantic).astype(np.uint8)
        for prop in proposals.gt_instances(labeled, img, class_map):
            gt_insts.append(metrics.Instance(points=prop.point_set,
                                             class_id=prop.gt_class))

    return ScanResult(
        scan_id=scan_path.stem, n_points=len(scan), detections=dets,
        pred_labels=pred_labels, gt_labels=gt_labels,
        pred_instances=pred_instances, gt_instances=gt_insts,
        timings=timings, batch=batch if keep_batch else None,
    )


def model_classifier(model: cnn.Model):
    return lambda batch: cnn.forward(model, batch)


def check_model_compatibility(cfg: PipelineConfig, model: cnn.Model) -> None:
    expected = tuple(cfg.channels.names())
    if tuple(model.meta.channels) != expected:
        raise InvalidConfigError(
            f"model was built for channels {model.meta.channels}, "
            f"config selects {expected}")
    if model.meta.patch_side != cfg.patch_side:
        raise InvalidConfigError(
            f"model patch side {model.meta.patch_side}, "
            f"config {cfg.patch_side}")


def write_detections(result: ScanResult, path: Path) -> None:
    """One line per detection: instance_id class confidence n_points idx..."""
    with open(path, "w") as fh:
        for det in result.detections:
            pts = " ".join(str(i) for i in det.point_indices.tolist())
            fh.write(f"{det.instance_id} {int(det.class_id)} "
                     f"{det.confidence:.6f} {det.point_indices.size} {pts}\n")


@dataclass
class RunOutcome:
    results: list[ScanResult]
    report: metrics.MetricsReport | None
    n_failed: int

    @property
    def exit_code(self) -> int:
        return 1 if self.n_failed > 0 or not self.results else 0


def run_pipeline(cfg: PipelineConfig, classifier_fn=None,
                 out_dir: str | Path | None = None,
                 dump_patches: bool = False,
                 with_metrics: bool = False) -> RunOutcome:
    """Process every selected scan; failures skip the scan, not the run."""
    class_map = (ClassMap.load(cfg.class_map_path) if cfg.class_map_path
                 else ClassMap.default())
    if classifier_fn is None:
        if not cfg.model_path or not Path(cfg.model_path).is_file():
            raise InvalidConfigError(f"model weights not found: {cfg.model_path}")
        model = cnn.load_weights(cfg.model_path)
        check_model_compatibility(cfg, model)
        classifier_fn = model_classifier(model)

    entries = discover_scans(cfg)
    if not entries:
        log.error("no scans selected under %s (sequence %r, scans %r)",
                  cfg.dataset_root, cfg.sequence, cfg.scans)
        return RunOutcome(results=[], report=None, n_failed=0)

    def work(entry):
        sid, scan_path, label_path = entry
        return process_scan(scan_path, label_path, cfg, class_map,
                            classifier_fn, keep_batch=dump_patches)

    results: dict[str, ScanResult] = {}
    n_failed = 0
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        for entry, outcome in zip(entries, pool.map(
                lambda e: _safe(work, e), entries)):
            sid = entry[0]
            if isinstance(outcome, Exception):
                n_failed += 1
                log.error("scan %s failed: %s", sid, outcome)
            else:
                results[sid] = outcome

    ordered = [results[sid] for sid in sorted(results)]

    if out_dir is not None:
        out_dir = Path(out_dir)
        det_dir = out_dir / "detections"
        det_dir.mkdir(parents=True, exist_ok=True)
        for res in ordered:
            write_detections(res, det_dir / f"{res.scan_id}.txt")
        if dump_patches:
            patch_dir = out_dir / "patches"
            patch_dir.mkdir(parents=True, exist_ok=True)
            for res in ordered:
                if res.batch is not None:
                    features.save_patch_dump(
                        res.batch, patch_dir / f"{res.scan_id}.lpch")

    report = None
    if with_metrics:
        acc = metrics.MetricsAccumulator()
        for res in ordered:
            if res.gt_labels is None:
                continue
            acc.add_scan(res.pred_labels, res.gt_labels,
                         res.pred_instances, res.gt_instances)
            for stage, secs in res.timings.items():
                acc.add_time(stage, secs)
        report = acc.report()

    return RunOutcome(results=ordered, report=report, n_failed=n_failed)


def _safe(fn, arg):
    try:
        return fn(arg)
    except Exception as exc:  # per-scan isolation, run continues
        return exc


@dataclass
class BenchResult:
    n_instances: int
    repetitions: int
    n_threads: int  # 0 = unlimited
    median_ms: float
    mean_ms: float
    p95_ms: float

    @property
    def per_instance_ms(self) -> float:
        return self.median_ms / self.n_instances

    def format(self) -> str:
        threads = "unlimited" if self.n_threads == 0 else str(self.n_threads)
        return (f"batch {self.n_instances} x {self.repetitions} reps, "
                f"threads {threads}: median {self.median_ms:.2f} ms, "
                f"mean {self.mean_ms:.2f} ms, p95 {self.p95_ms:.2f} ms, "
                f"{self.per_instance_ms:.3f} ms/instance")


def bench(model: cnn.Model, n_instances: int = 100, n_threads: int = 0,
          repetitions: int = 20, seed: int = 0) -> BenchResult:
    """Median/mean/p95 forward time over a synthetic batch, after warmup."""
    from threadpoolctl import threadpool_limits

    from .synthetic import random_batch_arrays

    if n_instances < 1:
        raise ValueError("n_instances must be >= 1")
    planes, stats = random_batch_arrays(
        n_instances, model.meta.n_planes, model.meta.patch_side, seed=seed)
    batch = features.Batch(
        planes=planes, stats_raw=stats, stats_norm=stats,
        proposal_refs=tuple(range(n_instances)),
        gt_classes=np.full(n_instances, features.UNKNOWN_CLASS, np.uint8),
    )

    def run_once():
        t0 = time.perf_counter()
        cnn.forward(model, batch)
        return (time.perf_counter() - t0) * 1000.0

    limits = None if n_threads == 0 else n_threads
    with threadpool_limits(limits=limits):
        for _ in range(3):
            run_once()
        samples = [run_once() for _ in range(repetitions)]

    samples.sort()
    p95_idx = min(len(samples) - 1, int(np.ceil(0.95 * len(samples))) - 1)
    return BenchResult(
        n_instances=n_instances, repetitions=repetitions, n_threads=n_threads,
        median_ms=median(samples), mean_ms=mean(samples),
        p95_ms=samples[p95_idx],
    )
