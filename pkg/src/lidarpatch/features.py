"""Network inputs: masked channel patches and per-instance statistics.

Each proposal becomes (a) a fixed-size crop of the selected channel
planes with everything outside the instance zeroed, and (b) a vector of
seven geometric statistics: width, length, height, point count, and the
Euclidean / X / Y distances of the centroid from the sensor.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .proposals import InstanceProposal

DUMP_MAGIC = b"LPCH"
DUMP_VERSION = 1
UNKNOWN_CLASS = 255

# fixed normalization scheme for the statistics vector: divisor per entry,
# point count goes through log10 first, everything clamps to [0, 1.5]
_STAT_SCALE = np.array([20.0, 20.0, 5.0, 4.0, 80.0, 80.0, 80.0])
_STAT_CLAMP = 1.5


class DumpFormatError(ValueError):
    """Raised for malformed patch dump files."""


@dataclass(frozen=True)
class StatVector:
    """Seven geometric statistics of one proposal, raw and normalized."""

    width: float     # Y extent, meters
    length: float    # X extent, meters
    height: float    # Z extent, meters
    point_count: int
    d_euclid: float  # centroid distance from the sensor
    d_x: float       # |centroid x|
    d_y: float       # |centroid y|

    @property
    def raw(self) -> np.ndarray:
        return np.array([
            self.width, self.length, self.height, float(self.point_count),
            self.d_euclid, self.d_x, self.d_y,
        ], dtype=np.float32)

    @property
    def normalized(self) -> np.ndarray:
        v = self.raw.astype(np.float64)
        v[3] = np.log10(max(v[3], 1.0))
        v /= _STAT_SCALE
        return np.clip(v, 0.0, _STAT_CLAMP).astype(np.float32)


@dataclass(frozen=True)
class Patch:
    """One network input: C x P x P planes (mask last) plus statistics."""

    planes: np.ndarray  # (C, P, P) float32
    stats: StatVector | None
    proposal_ref: int   # index of the proposal within its scan
    gt_class: int = UNKNOWN_CLASS

    @property
    def side(self) -> int:
        return self.planes.shape[-1]


@dataclass(frozen=True)
class Batch:
    """Uniformly shaped patches stacked for inference."""

    planes: np.ndarray      # (N, C, P, P) float32
    stats_raw: np.ndarray   # (N, 7) float32
    stats_norm: np.ndarray  # (N, 7) float32
    proposal_refs: tuple[int, ...]
    gt_classes: np.ndarray  # (N,) uint8, 255 if unknown

    def __len__(self) -> int:
        return self.planes.shape[0]


class EmptyBatchError(ValueError):
    """No proposals to classify; callers skip inference for the scan."""


def compute_stats(proposal: InstanceProposal, scan) -> StatVector:
    """Axis-aligned extents, point count, and centroid distances."""
    pts = scan.xyz[proposal.point_indices].astype(np.float64)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    centroid = pts.mean(axis=0)
    return StatVector(
        width=float(hi[1] - lo[1]),
        length=float(hi[0] - lo[0]),
        height=float(hi[2] - lo[2]),
        point_count=int(pts.shape[0]),
        d_euclid=float(np.linalg.norm(centroid)),
        d_x=float(abs(centroid[0])),
        d_y=float(abs(centroid[1])),
    )


def _nearest_indices(n_src: int, n_dst: int) -> np.ndarray:
    """Nearest-neighbour source index for each destination index."""
    return np.floor(np.arange(n_dst) * n_src / n_dst).astype(np.int64)


def extract_patch(proposal: InstanceProposal, stack: np.ndarray,
                  patch_side: int = 32, proposal_ref: int = 0,
                  gt_class: int = UNKNOWN_CLASS,
                  stats: StatVector | None = None) -> Patch:
    """Crop, mask, and resample one proposal from the channel stack.

    The image bbox grows by 10% per side (rows clamped, columns wrapped),
    every pixel outside the instance is zeroed in all planes, and the crop
    is nearest-neighbour resampled to patch_side x patch_side.  The last
    plane becomes the resampled instance mask.
    """
    if patch_side < 4:
        raise ValueError("patch_side must be >= 4")
    n_chan, img_h, img_w = stack.shape
    row_min, col_min, row_max, col_max = proposal.bbox_image

    n_rows = row_max - row_min + 1
    n_cols = (col_max - col_min) % img_w + 1
    margin_r = int(round(0.1 * n_rows))
    margin_c = int(round(0.1 * n_cols))

    r0 = max(row_min - margin_r, 0)
    r1 = min(row_max + margin_r, img_h - 1)
    crop_rows = np.arange(r0, r1 + 1)
    crop_cols = (np.arange(col_min - margin_c,
                           col_min - margin_c + n_cols + 2 * margin_c)) % img_w

    crop = stack[:, crop_rows[:, None], crop_cols[None, :]].copy()

    inst = np.zeros((crop_rows.size, crop_cols.size), dtype=bool)
    rel_r = proposal.rows - r0
    rel_c = (proposal.cols - crop_cols[0]) % img_w
    inst[rel_r, rel_c] = True

    crop[:, ~inst] = 0.0
    crop[-1] = inst.astype(np.float32)  # mask plane -> instance mask

    ri = _nearest_indices(crop_rows.size, patch_side)
    ci = _nearest_indices(crop_cols.size, patch_side)
    planes = crop[:, ri[:, None], ci[None, :]].astype(np.float32)

    return Patch(planes=planes, stats=stats, proposal_ref=proposal_ref,
                 gt_class=gt_class)


def make_batch(proposals: list[InstanceProposal], stack: np.ndarray, scan,
               patch_side: int = 32) -> Batch:
    """One patch + statistics per proposal, order preserved."""
    if not proposals:
        raise EmptyBatchError("no proposals for this scan")
    planes, raw, norm, refs, gts = [], [], [], [], []
    for i, prop in enumerate(proposals):
        stats = compute_stats(prop, scan)
        gt = int(prop.gt_class) if prop.gt_class is not None else UNKNOWN_CLASS
        patch = extract_patch(prop, stack, patch_side, proposal_ref=i,
                              gt_class=gt, stats=stats)
        planes.append(patch.planes)
        raw.append(stats.raw)
        norm.append(stats.normalized)
        refs.append(i)
        gts.append(gt)
    return Batch(
        planes=np.stack(planes),
        stats_raw=np.stack(raw),
        stats_norm=np.stack(norm),
        proposal_refs=tuple(refs),
        gt_classes=np.array(gts, dtype=np.uint8),
    )


def save_patch_dump(batch: Batch, path: str | Path) -> None:
    """Binary patch container, little-endian.

    Header: magic LPCH, version u16, count u32, C u8, P u8.  Per patch:
    gt class u8, raw stats 7xf32, normalized stats 7xf32, planes CxPxP f32.
    """
    n, c, p, _ = batch.planes.shape
    out = bytearray()
    out += DUMP_MAGIC
    out += struct.pack("<HIBB", DUMP_VERSION, n, c, p)
    for i in range(n):
        out += struct.pack("<B", int(batch.gt_classes[i]))
        out += batch.stats_raw[i].astype("<f4").tobytes()
        out += batch.stats_norm[i].astype("<f4").tobytes()
        out += batch.planes[i].astype("<f4").tobytes()
    Path(path).write_bytes(bytes(out))


def load_patch_dump(path: str | Path) -> Batch:
    data = Path(path).read_bytes()
    if data[:4] != DUMP_MAGIC:
        raise DumpFormatError(f"{path}: bad magic {data[:4]!r}")
    version, n, c, p = struct.unpack_from("<HIBB", data, 4)
    if version != DUMP_VERSION:
        raise DumpFormatError(f"{path}: unsupported version {version}")
    rec = 1 + 4 * (7 + 7 + c * p * p)
    expected = 12 + n * rec
    if len(data) != expected:
        raise DumpFormatError(f"{path}: {len(data)} bytes, expected {expected}")
    planes = np.empty((n, c, p, p), dtype=np.float32)
    raw = np.empty((n, 7), dtype=np.float32)
    norm = np.empty((n, 7), dtype=np.float32)
    gts = np.empty(n, dtype=np.uint8)
    off = 12
    for i in range(n):
        gts[i] = data[off]
        off += 1
        raw[i] = np.frombuffer(data, "<f4", 7, off)
        off += 28
        norm[i] = np.frombuffer(data, "<f4", 7, off)
        off += 28
        planes[i] = np.frombuffer(data, "<f4", c * p * p, off).reshape(c, p, p)
        off += 4 * c * p * p
    return Batch(planes=planes, stats_raw=raw, stats_norm=norm,
                 proposal_refs=tuple(range(n)), gt_classes=gts)
