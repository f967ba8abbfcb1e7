"""Pointwise evaluation: per-class IoU, 10-bin AP, and panoptic quality.

IoU is TP / (TP + FP + FN) over per-point labels.  AP matches predicted
instances to same-class ground truth greedily by descending pointwise
IoU, one-to-one, at the ten thresholds 0.50 ... 0.95 (step 0.05), and
averages the precision values.  Panoptic quality pairs instances at
IoU > 0.5 (such a partner is necessarily unique) and factors into
segmentation quality (mean matched IoU) times recognition quality
(TP / (TP + FP/2 + FN/2)).  The None class takes part in IoU only; AP
and PQ cover the countable classes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pointcloud import ClassId

AP_THRESHOLDS = tuple(round(0.50 + 0.05 * k, 2) for k in range(10))
THING_CLASSES = (ClassId.CAR, ClassId.TRUCK, ClassId.BIKE, ClassId.PEDESTRIAN)


@dataclass(frozen=True)
class Instance:
    """One instance: its point indices and class, for AP/PQ evaluation."""

    points: frozenset[int]
    class_id: ClassId

    def __post_init__(self):
        assert len(self.points) > 0


def instance_iou(a: frozenset[int], b: frozenset[int]) -> float:
    inter = len(a & b)
    if inter == 0:
        return 0.0
    return inter / len(a | b)


def iou_per_class(pred: np.ndarray, gt: np.ndarray) -> dict[ClassId, float]:
    """Per-class pointwise IoU; classes absent on both sides are omitted."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"label shapes differ: {pred.shape} vs {gt.shape}")
    out = {}
    for cls in ClassId:
        tp = int(np.sum((pred == cls) & (gt == cls)))
        fp = int(np.sum((pred == cls) & (gt != cls)))
        fn = int(np.sum((pred != cls) & (gt == cls)))
        if tp + fp + fn == 0:
            continue
        out[cls] = tp / (tp + fp + fn)
    return out


def _greedy_matches(preds: list[Instance], gts: list[Instance]) -> list[tuple[int, int, float]]:
    """One-to-one (pred, gt, iou) pairs, greedy by descending IoU.

    Only same-class pairs with positive IoU are candidates.  Ties resolve
    by (pred index, gt index) for determinism.
    """
    pairs = []
    for i, p in enumerate(preds):
        for j, g in enumerate(gts):
            if p.class_id != g.class_id:
                continue
            iou = instance_iou(p.points, g.points)
            if iou > 0.0:
                pairs.append((-iou, i, j))
    pairs.sort()
    used_p: set[int] = set()
    used_g: set[int] = set()
    matches = []
    for neg_iou, i, j in pairs:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        matches.append((i, j, -neg_iou))
    return matches


@dataclass
class APResult:
    ap: float
    per_threshold: dict[float, float]  # threshold -> precision

    @property
    def ap50(self) -> float:
        return self.per_threshold[0.5]

    @property
    def ap75(self) -> float:
        return self.per_threshold[0.75]

    @property
    def ap95(self) -> float:
        return self.per_threshold[0.95]


def average_precision(preds: list[Instance], gts: list[Instance]) -> APResult:
    """AP over the ten IoU bins; precision is 0 when nothing is predicted."""
    if any(p.class_id == ClassId.NONE for p in preds):
        raise ValueError("None-class predictions must be dropped before AP")
    matches = _greedy_matches(preds, gts)
    per_threshold = {}
    for thr in AP_THRESHOLDS:
        tp = sum(1 for _, _, iou in matches if iou >= thr)
        per_threshold[thr] = tp / len(preds) if preds else 0.0
    ap = float(np.mean([per_threshold[t] for t in AP_THRESHOLDS]))
    return APResult(ap=ap, per_threshold=per_threshold)


@dataclass
class PanopticResult:
    pq: float
    sq: float
    rq: float
    tp: int
    fp: int
    fn: int


def panoptic_quality(preds: list[Instance],
                     gts: list[Instance]) -> dict[ClassId, PanopticResult]:
    """Per-class PQ/SQ/RQ; classes with no instances on either side omitted."""
    out = {}
    for cls in THING_CLASSES:
        p_cls = [p for p in preds if p.class_id == cls]
        g_cls = [g for g in gts if g.class_id == cls]
        if not p_cls and not g_cls:
            continue
        tp_pairs = [
            (i, j, iou) for i, j, iou in _greedy_matches(p_cls, g_cls)
            if iou > 0.5
        ]
        tp = len(tp_pairs)
        fp = len(p_cls) - tp
        fn = len(g_cls) - tp
        if tp > 0:
            sq = float(np.mean([iou for _, _, iou in tp_pairs]))
            rq = tp / (tp + 0.5 * fp + 0.5 * fn)
        else:
            sq = 0.0
            rq = 0.0
        out[cls] = PanopticResult(pq=sq * rq, sq=sq, rq=rq, tp=tp, fp=fp, fn=fn)
    return out


@dataclass
class MetricsAccumulator:
    """Dataset-level aggregation: sums counts across scans, divides once.

    Pointwise confusion sums per class; instance matching stays per scan
    (instances never cross scans), with matched counts and IoU sums pooled
    before the final division.
    """

    point_tp: dict[ClassId, int] = field(default_factory=dict)
    point_fp: dict[ClassId, int] = field(default_factory=dict)
    point_fn: dict[ClassId, int] = field(default_factory=dict)
    ap_tp: dict[float, int] = field(
        default_factory=lambda: {t: 0 for t in AP_THRESHOLDS})
    n_preds: int = 0
    pq_tp: dict[ClassId, int] = field(default_factory=dict)
    pq_fp: dict[ClassId, int] = field(default_factory=dict)
    pq_fn: dict[ClassId, int] = field(default_factory=dict)
    pq_iou_sum: dict[ClassId, float] = field(default_factory=dict)
    n_scans: int = 0
    stage_seconds: dict[str, float] = field(default_factory=dict)

    def add_scan(self, pred_labels: np.ndarray, gt_labels: np.ndarray,
                 pred_instances: list[Instance],
                 gt_instances: list[Instance]) -> None:
        pred_labels = np.asarray(pred_labels)
        gt_labels = np.asarray(gt_labels)
        if pred_labels.shape != gt_labels.shape:
            raise ValueError("label shapes differ")
        for cls in ClassId:
            tp = int(np.sum((pred_labels == cls) & (gt_labels == cls)))
            fp = int(np.sum((pred_labels == cls) & (gt_labels != cls)))
            fn = int(np.sum((pred_labels != cls) & (gt_labels == cls)))
            if tp + fp + fn == 0:
                continue
            self.point_tp[cls] = self.point_tp.get(cls, 0) + tp
            self.point_fp[cls] = self.point_fp.get(cls, 0) + fp
            self.point_fn[cls] = self.point_fn.get(cls, 0) + fn

        matches = _greedy_matches(pred_instances, gt_instances)
        for thr in AP_THRESHOLDS:
            self.ap_tp[thr] += sum(1 for _, _, iou in matches if iou >= thr)
        self.n_preds += len(pred_instances)

        for cls in THING_CLASSES:
            p_cls = [p for p in pred_instances if p.class_id == cls]
            g_cls = [g for g in gt_instances if g.class_id == cls]
            if not p_cls and not g_cls:
                continue
            tp_pairs = [
                (i, j, iou) for i, j, iou in _greedy_matches(p_cls, g_cls)
                if iou > 0.5
            ]
            self.pq_tp[cls] = self.pq_tp.get(cls, 0) + len(tp_pairs)
            self.pq_fp[cls] = self.pq_fp.get(cls, 0) + len(p_cls) - len(tp_pairs)
            self.pq_fn[cls] = self.pq_fn.get(cls, 0) + len(g_cls) - len(tp_pairs)
            self.pq_iou_sum[cls] = self.pq_iou_sum.get(cls, 0.0) + sum(
                iou for _, _, iou in tp_pairs)
        self.n_scans += 1

    def add_time(self, stage: str, seconds: float) -> None:
        self.stage_seconds[stage] = self.stage_seconds.get(stage, 0.0) + seconds

    def report(self) -> "MetricsReport":
        iou = {}
        for cls in self.point_tp.keys() | self.point_fp.keys() | self.point_fn.keys():
            tp = self.point_tp.get(cls, 0)
            fp = self.point_fp.get(cls, 0)
            fn = self.point_fn.get(cls, 0)
            iou[cls] = tp / (tp + fp + fn)

        per_threshold = {
            t: (self.ap_tp[t] / self.n_preds if self.n_preds else 0.0)
            for t in AP_THRESHOLDS
        }
        ap = APResult(
            ap=float(np.mean([per_threshold[t] for t in AP_THRESHOLDS])),
            per_threshold=per_threshold,
        )

        pq = {}
        for cls in self.pq_tp.keys() | self.pq_fp.keys() | self.pq_fn.keys():
            tp = self.pq_tp.get(cls, 0)
            fp = self.pq_fp.get(cls, 0)
            fn = self.pq_fn.get(cls, 0)
            if tp > 0:
                sq = self.pq_iou_sum.get(cls, 0.0) / tp
                rq = tp / (tp + 0.5 * fp + 0.5 * fn)
            else:
                sq, rq = 0.0, 0.0
            pq[cls] = PanopticResult(pq=sq * rq, sq=sq, rq=rq,
                                     tp=tp, fp=fp, fn=fn)
        return MetricsReport(iou=iou, ap=ap, panoptic=pq,
                             n_scans=self.n_scans,
                             stage_seconds=dict(self.stage_seconds))


@dataclass
class MetricsReport:
    iou: dict[ClassId, float]
    ap: APResult
    panoptic: dict[ClassId, PanopticResult]
    n_scans: int
    stage_seconds: dict[str, float]

    def triples(self) -> list[tuple[str, str, float]]:
        """(metric, class, value) rows for the line-oriented text format."""
        rows = []
        for cls in ClassId:
            if cls in self.iou:
                rows.append(("iou", cls.label, self.iou[cls]))
        rows.append(("ap", "all", self.ap.ap))
        for thr in (0.5, 0.75, 0.95):
            rows.append((f"ap@{thr:g}", "all", self.ap.per_threshold[thr]))
        for cls in THING_CLASSES:
            if cls in self.panoptic:
                r = self.panoptic[cls]
                rows.append(("pq", cls.label, r.pq))
                rows.append(("sq", cls.label, r.sq))
                rows.append(("rq", cls.label, r.rq))
        return rows

    def format_tables(self) -> str:
        """Human-readable tables: IoU row, AP row, PQ/SQ/RQ block."""
        lines = []
        classes = [c.label for c in ClassId]
        lines.append("Semantic segmentation (IoU)")
        lines.append("  " + "  ".join(f"{c:>10}" for c in classes))
        lines.append("  " + "  ".join(
            f"{self.iou.get(c, float('nan')):>10.3f}" for c in ClassId))
        lines.append("")
        lines.append("Object detection (AP over IoU 0.50:0.05:0.95)")
        lines.append(f"  AP {self.ap.ap:.3f}   AP@0.5 {self.ap.ap50:.3f}   "
                     f"AP@0.75 {self.ap.ap75:.3f}   AP@0.95 {self.ap.ap95:.3f}")
        lines.append("")
        lines.append("Panoptic segmentation")
        lines.append(f"  {'class':>10}  {'PQ':>7}  {'SQ':>7}  {'RQ':>7}")
        for cls in THING_CLASSES:
            if cls in self.panoptic:
                r = self.panoptic[cls]
                lines.append(f"  {cls.label:>10}  {r.pq:>7.3f}  {r.sq:>7.3f}"
                             f"  {r.rq:>7.3f}")
        lines.append("")
        lines.append(f"scans: {self.n_scans}")
        if self.stage_seconds:
            total = sum(self.stage_seconds.values())
            stages = "  ".join(f"{k} {v:.3f}s"
                               for k, v in sorted(self.stage_seconds.items()))
            lines.append(f"timing: {stages}  (total {total:.3f}s)")
        return "\n".join(lines)
