"""Input-channel ablation harness.

Sixteen channel configurations (every combination the experiment covers,
with the binary mask always included) are trained and evaluated one by
one at a fixed seed.  The table renders with bullet columns and is also
written as a delimited file.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

from .dataset import SampleSet
from .scenes import ALL_CHANNELS
from .train import TrainConfig, train

ABLATION_ROWS: tuple[tuple[str, ...], ...] = (
    (),
    ("x", "y", "z"),
    ("x", "y", "z", "intensity"),
    ("x", "y", "z", "depth"),
    ("x", "y", "z", "intensity", "depth"),
    ("x", "y", "z", "hnv", "vnv"),
    ("x", "y", "z", "intensity", "hnv", "vnv"),
    ("x", "y", "z", "depth", "hnv", "vnv"),
    ("x", "y", "z", "intensity", "depth", "hnv", "vnv"),
    ("intensity",),
    ("depth",),
    ("intensity", "depth"),
    ("intensity", "hnv", "vnv"),
    ("depth", "hnv", "vnv"),
    ("intensity", "depth", "hnv", "vnv"),
    ("hnv", "vnv"),
)

_HEADERS = ("X", "Y", "Z", "I", "D", "HNV", "VNV")


@dataclass
class AblationRow:
    channels: tuple[str, ...]
    accuracy: float


def run_ablation(train_set: SampleSet, val_set: SampleSet,
                 rows: tuple[tuple[str, ...], ...] = ABLATION_ROWS,
                 base_cfg: TrainConfig = TrainConfig()) -> list[AblationRow]:
    """One train/eval per configuration, input order preserved."""
    out = []
    for channels in rows:
        cfg = replace(base_cfg, channels=tuple(channels))
        result = train(train_set, val_set, cfg)
        out.append(AblationRow(channels=tuple(channels),
                               accuracy=result.val_accuracy))
    return out


def format_table(rows: list[AblationRow]) -> str:
    lines = ["  ".join(f"{h:>3}" for h in _HEADERS) + "  | Test Acc.",
             "-" * 46]
    for row in rows:
        marks = ["  *" if name in row.channels else "   "
                 for name in ALL_CHANNELS]
        lines.append("  ".join(marks) + f"  | {row.accuracy:.3f}")
    return "\n".join(lines)


def write_tsv(rows: list[AblationRow], path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write("\t".join(_HEADERS) + "\taccuracy\n")
        for row in rows:
            flags = "\t".join("1" if name in row.channels else "0"
                              for name in ALL_CHANNELS)
            fh.write(f"{flags}\t{row.accuracy:.6f}\n")
