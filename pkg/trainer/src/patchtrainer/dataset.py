"""Turning LPCH dumps into training arrays.

Dumps from the ground-truth instance mode carry their class byte; dumps
from clustered background scenes carry 255 and are relabelled to the
reject class.  Splits are by source sequence, never by shuffling across
sequences, so validation scenes are wholly unseen.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .lpch import UNKNOWN_CLASS, read_dump
from .scenes import ALL_CHANNELS

NONE_CLASS = 0

# display scaling for metric channels feeding the network; the dump keeps
# raw meters for x/y/z/depth while intensity/normals/mask are already unit
CHANNEL_SCALE = {"x": 1 / 80.0, "y": 1 / 80.0, "z": 1 / 5.0,
                 "depth": 1 / 80.0}


class DatasetError(ValueError):
    pass


@dataclass
class DumpEntry:
    sequence: str
    scan_id: str
    mode: str  # "gt" | "none"
    path: Path


@dataclass
class SampleSet:
    """Flat sample arrays; planes follow ALL_CHANNELS order plus mask."""

    planes: np.ndarray      # (N, 8, P, P) float32
    stats: np.ndarray       # (N, 7) float32 normalized
    labels: np.ndarray      # (N,) int64
    sequences: np.ndarray   # (N,) object/str

    def __len__(self) -> int:
        return self.planes.shape[0]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=5)


def discover_dumps(root: str | Path) -> list[DumpEntry]:
    """dumps/<sequence>/<gt|none>/patches/*.lpch, sorted, deduplicated."""
    root = Path(root)
    seen: dict[tuple[str, str, str], DumpEntry] = {}
    for path in sorted(root.glob("dumps/*/*/patches/*.lpch")):
        mode = path.parents[1].name
        sequence = path.parents[2].name
        key = (sequence, path.stem, mode)
        seen.setdefault(key, DumpEntry(sequence=sequence, scan_id=path.stem,
                                       mode=mode, path=path))
    return list(seen.values())


def load_samples(entries: list[DumpEntry]) -> SampleSet:
    # idempotent ingestion: duplicate (sequence, scan, mode) entries collapse
    unique: dict[tuple[str, str, str], DumpEntry] = {}
    for entry in entries:
        unique.setdefault((entry.sequence, entry.scan_id, entry.mode), entry)
    entries = list(unique.values())
    if not entries:
        raise DatasetError("no patch dumps found")
    planes, stats, labels, seqs = [], [], [], []
    n_chan = None
    for entry in sorted(entries, key=lambda e: (e.sequence, e.scan_id, e.mode)):
        dump = read_dump(entry.path)
        if n_chan is None:
            n_chan = dump.planes.shape[1]
        elif dump.planes.shape[1] != n_chan:
            raise DatasetError(
                f"{entry.path}: {dump.planes.shape[1]} planes, expected {n_chan}")
        lab = dump.gt_classes.astype(np.int64)
        if entry.mode == "none":
            lab[:] = NONE_CLASS
        else:
            lab[lab == UNKNOWN_CLASS] = NONE_CLASS
        planes.append(dump.planes)
        stats.append(dump.stats_norm)
        labels.append(lab)
        seqs.append(np.full(len(dump), entry.sequence, dtype=object))
    return SampleSet(
        planes=np.concatenate(planes),
        stats=np.concatenate(stats),
        labels=np.concatenate(labels),
        sequences=np.concatenate(seqs),
    )


def trim_uniform(samples: SampleSet, n_per_class: int) -> SampleSet:
    """Deterministically keep the first n of each class (scan order)."""
    keep = np.zeros(len(samples), dtype=bool)
    for cls in range(5):
        idx = np.nonzero(samples.labels == cls)[0]
        if idx.size < n_per_class:
            raise DatasetError(
                f"class {cls}: only {idx.size} samples, need {n_per_class}")
        keep[idx[:n_per_class]] = True
    return SampleSet(planes=samples.planes[keep], stats=samples.stats[keep],
                     labels=samples.labels[keep],
                     sequences=samples.sequences[keep])


def split_by_sequence(samples: SampleSet,
                      val_sequences: set[str]) -> tuple[SampleSet, SampleSet]:
    """Deterministic sequence-level split; validation never trains."""
    in_val = np.array([s in val_sequences for s in samples.sequences])
    if in_val.all() or not in_val.any():
        raise DatasetError(
            f"validation sequences {sorted(val_sequences)} leave an empty split")

    def take(mask):
        return SampleSet(planes=samples.planes[mask],
                         stats=samples.stats[mask],
                         labels=samples.labels[mask],
                         sequences=samples.sequences[mask])

    return take(~in_val), take(in_val)


def select_channels(samples: SampleSet,
                    channels: tuple[str, ...]) -> np.ndarray:
    """Subset the 8-plane stack; the mask plane always rides along last.

    Metric channels are scaled to unit-ish range for the network.
    """
    unknown = set(channels) - set(ALL_CHANNELS)
    if unknown:
        raise DatasetError(f"unknown channels {sorted(unknown)}")
    if samples.planes.shape[1] != len(ALL_CHANNELS) + 1:
        raise DatasetError("dumps must carry all seven channels plus mask")
    idx = [ALL_CHANNELS.index(c) for c in channels] + [len(ALL_CHANNELS)]
    out = samples.planes[:, idx].copy()
    for k, name in enumerate(channels):
        scale = CHANNEL_SCALE.get(name)
        if scale is not None:
            np.clip(out[:, k] * scale, -1.5, 1.5, out=out[:, k])
    return out


def generate_synthetic_dataset(out_root, seed: int, n_per_class: int,
                               n_folds: int = 8, grid=None) -> SampleSet:
    """Render scenes, run the inference CLI, load and balance the dumps."""
    from .scenes import GridSpec, generate_scenes

    grid = grid or GridSpec()
    generate_scenes(out_root, seed=seed, n_per_class=n_per_class,
                    n_folds=n_folds, grid=grid)
    samples = load_samples(discover_dumps(out_root))
    return trim_uniform(samples, n_per_class)
