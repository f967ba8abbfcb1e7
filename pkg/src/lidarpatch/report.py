"""Report rendering: delimited metric files plus matplotlib figures.

``write_report`` drops four artifacts into the output directory:
metrics.txt (one ``metric class value`` triple per line), metrics.tsv
(tab-separated with header), and bar-chart PNGs for the per-class IoU,
the AP bins, and the PQ/SQ/RQ decomposition.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .metrics import AP_THRESHOLDS, THING_CLASSES, MetricsReport  # noqa: E402
from .pointcloud import ClassId  # noqa: E402


def write_metric_text(report: MetricsReport, path: Path) -> None:
    with open(path, "w") as fh:
        for metric, cls, value in report.triples():
            fh.write(f"{metric} {cls} {value:.6f}\n")


def write_metric_tsv(report: MetricsReport, path: Path) -> None:
    with open(path, "w") as fh:
        fh.write("metric\tclass\tvalue\n")
        for metric, cls, value in report.triples():
            fh.write(f"{metric}\t{cls}\t{value:.6f}\n")


def _bar_figure(labels, values, title, ylabel, path, color="#4878a8"):
    fig, ax = plt.subplots(figsize=(6.0, 3.2))
    ax.bar(range(len(labels)), values, color=color)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _panoptic_figure(report: MetricsReport, path: Path) -> None:
    classes = [c for c in THING_CLASSES if c in report.panoptic]
    if not classes:
        return
    width = 0.27
    fig, ax = plt.subplots(figsize=(6.4, 3.2))
    xs = range(len(classes))
    for k, (name, color) in enumerate(
            [("pq", "#4878a8"), ("sq", "#6aa84f"), ("rq", "#c97b4a")]):
        vals = [getattr(report.panoptic[c], name) for c in classes]
        ax.bar([x + (k - 1) * width for x in xs], vals, width,
               label=name.upper(), color=color)
    ax.set_xticks(list(xs))
    ax.set_xticklabels([c.label for c in classes])
    ax.set_ylim(0.0, 1.05)
    ax.set_title("Panoptic quality decomposition")
    ax.legend(frameon=False)
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_report(report: MetricsReport, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    txt = out_dir / "metrics.txt"
    write_metric_text(report, txt)
    written.append(txt)
    tsv = out_dir / "metrics.tsv"
    write_metric_tsv(report, tsv)
    written.append(tsv)

    iou_classes = [c for c in ClassId if c in report.iou]
    if iou_classes:
        path = out_dir / "iou_per_class.png"
        _bar_figure([c.label for c in iou_classes],
                    [report.iou[c] for c in iou_classes],
                    "Semantic segmentation", "IoU", path)
        written.append(path)

    path = out_dir / "average_precision.png"
    _bar_figure([f"{t:.2f}" for t in AP_THRESHOLDS],
                [report.ap.per_threshold[t] for t in AP_THRESHOLDS],
                f"Detection precision per IoU bin (AP {report.ap.ap:.3f})",
                "precision", path, color="#6aa84f")
    written.append(path)

    pq_path = out_dir / "panoptic_quality.png"
    _panoptic_figure(report, pq_path)
    if pq_path.exists():
        written.append(pq_path)
    return written
