"""KITTI-format point cloud and label file I/O.

Scan files are flat little-endian binaries with 16-byte records of four
float32 values (x, y, z, intensity), no header.  Label files carry one
uint32 per point: low 16 bits semantic class id, high 16 bits instance id.
Raw semantic ids are remapped onto five automotive classes through an
editable YAML table.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

POINT_RECORD_BYTES = 16


class FormatError(ValueError):
    """Raised for malformed scan, label, or mapping files."""


class ClassId(enum.IntEnum):
    NONE = 0
    CAR = 1
    TRUCK = 2
    BIKE = 3
    PEDESTRIAN = 4

    @property
    def label(self) -> str:
        return _CLASS_LABELS[self]

    @staticmethod
    def from_label(name: str) -> "ClassId":
        try:
            return _LABEL_TO_CLASS[name.strip().lower()]
        except KeyError:
            raise FormatError(f"unknown class name: {name!r}") from None


_CLASS_LABELS = {
    ClassId.NONE: "None",
    ClassId.CAR: "Car",
    ClassId.TRUCK: "Truck",
    ClassId.BIKE: "Bike",
    ClassId.PEDESTRIAN: "Pedestrian",
}
_LABEL_TO_CLASS = {v.lower(): k for k, v in _CLASS_LABELS.items()}

CLASS_NAMES = tuple(_CLASS_LABELS[c] for c in ClassId)


@dataclass(frozen=True)
class Scan:
    """One Lidar sweep: points in file order, sensor at origin.

    xyz is (N, 3) float32 meters, intensity is (N,) float32 in [0, 1].
    """

    xyz: np.ndarray
    intensity: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        assert self.xyz.ndim == 2 and self.xyz.shape[1] == 3
        assert self.intensity.shape == (self.xyz.shape[0],)

    def __len__(self) -> int:
        return self.xyz.shape[0]


@dataclass(frozen=True)
class LabeledScan:
    """Scan plus per-point semantic/instance ids, index-aligned."""

    scan: Scan
    semantic: np.ndarray  # (N,) uint16 raw dataset class ids
    instance: np.ndarray  # (N,) uint16 instance ids

    def __post_init__(self):
        n = len(self.scan)
        assert self.semantic.shape == (n,) and self.instance.shape == (n,)


def load_scan(path: str | Path) -> Scan:
    """Decode a scan file into a Scan, preserving point order.

    Intensity values outside [0, 1] are clamped rather than rejected;
    rare sensor artifacts should not abort a run.
    """
    path = Path(path)
    n_bytes = path.stat().st_size
    if n_bytes % POINT_RECORD_BYTES != 0:
        raise FormatError(
            f"{path}: size {n_bytes} bytes is not a multiple of {POINT_RECORD_BYTES}"
        )
    records = np.fromfile(path, dtype="<f4").reshape(-1, 4)
    xyz = np.ascontiguousarray(records[:, :3])
    intensity = np.clip(records[:, 3], 0.0, 1.0)
    return Scan(xyz=xyz, intensity=intensity, source_id=path.stem)


def save_scan(scan: Scan, path: str | Path) -> None:
    """Write a Scan back to the 16-byte-record format (round-trip exact)."""
    records = np.empty((len(scan), 4), dtype="<f4")
    records[:, :3] = scan.xyz
    records[:, 3] = scan.intensity
    records.tofile(str(path))


def load_labels(path: str | Path, scan: Scan) -> LabeledScan:
    """Load the per-point label file aligned with ``scan``.

    Word i splits as semantic = word & 0xFFFF, instance = word >> 16.
    """
    path = Path(path)
    n_bytes = path.stat().st_size
    if n_bytes != 4 * len(scan):
        raise FormatError(
            f"{path}: {n_bytes} bytes for {len(scan)} points (need {4 * len(scan)})"
        )
    words = np.fromfile(path, dtype="<u4")
    semantic = (words & 0xFFFF).astype(np.uint16)
    instance = (words >> 16).astype(np.uint16)
    return LabeledScan(scan=scan, semantic=semantic, instance=instance)


def save_labels(labeled: LabeledScan, path: str | Path) -> None:
    words = labeled.instance.astype(np.uint32) << 16
    words |= labeled.semantic.astype(np.uint32)
    words.astype("<u4").tofile(str(path))


class ClassMap:
    """Raw semantic id -> ClassId lookup, total over all 16-bit ids.

    Ids absent from the table map to NONE (forward compatibility with
    dataset revisions).
    """

    def __init__(self, table: dict[int, ClassId]):
        lut = np.zeros(65536, dtype=np.uint8)
        for raw_id, cls in table.items():
            if not 0 <= raw_id < 65536:
                raise FormatError(f"raw id {raw_id} outside uint16 range")
            lut[raw_id] = int(cls)
        self._lut = lut

    @staticmethod
    def load(path: str | Path) -> "ClassMap":
        """Read a YAML table of ``raw id: class name`` entries."""
        with open(path) as fh:
            entries = yaml.safe_load(fh)
        if not isinstance(entries, dict):
            raise FormatError(f"{path}: expected a mapping of id -> class name")
        table = {int(k): ClassId.from_label(str(v)) for k, v in entries.items()}
        return ClassMap(table)

    @staticmethod
    def default() -> "ClassMap":
        """The shipped SemanticKITTI mapping."""
        ref = resources.files("lidarpatch.configs") / "semantic_kitti.yaml"
        with resources.as_file(ref) as path:
            return ClassMap.load(path)

    def remap(self, raw_semantic: np.ndarray | int) -> np.ndarray | ClassId:
        """Map raw semantic id(s) to ClassId; total function."""
        if np.isscalar(raw_semantic):
            return ClassId(int(self._lut[int(raw_semantic)]))
        return self._lut[np.asarray(raw_semantic, dtype=np.int64)]
