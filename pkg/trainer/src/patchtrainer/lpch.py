"""Reader for LPCH patch dump files.

Layout (little-endian): magic ``LPCH``, version u16, count u32, C u8,
P u8; then per patch: gt class u8 (255 unknown), raw stats 7 x f32,
normalized stats 7 x f32, planes C*P*P f32.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"LPCH"
VERSION = 1
UNKNOWN_CLASS = 255


class DumpError(ValueError):
    pass


@dataclass
class PatchDump:
    planes: np.ndarray      # (N, C, P, P) float32
    stats_raw: np.ndarray   # (N, 7) float32
    stats_norm: np.ndarray  # (N, 7) float32
    gt_classes: np.ndarray  # (N,) uint8
    path: Path

    def __len__(self) -> int:
        return self.planes.shape[0]


def read_dump(path: str | Path) -> PatchDump:
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != MAGIC:
        raise DumpError(f"{path}: bad magic {data[:4]!r}")
    version, count, n_chan, side = struct.unpack_from("<HIBB", data, 4)
    if version != VERSION:
        raise DumpError(f"{path}: unsupported dump version {version}")
    record = 1 + 4 * (14 + n_chan * side * side)
    if len(data) != 12 + count * record:
        raise DumpError(f"{path}: truncated ({len(data)} bytes, "
                        f"expected {12 + count * record})")

    planes = np.empty((count, n_chan, side, side), dtype=np.float32)
    raw = np.empty((count, 7), dtype=np.float32)
    norm = np.empty((count, 7), dtype=np.float32)
    gts = np.empty(count, dtype=np.uint8)
    off = 12
    for i in range(count):
        gts[i] = data[off]
        off += 1
        raw[i] = np.frombuffer(data, "<f4", 7, off)
        off += 28
        norm[i] = np.frombuffer(data, "<f4", 7, off)
        off += 28
        planes[i] = np.frombuffer(data, "<f4", n_chan * side * side,
                                  off).reshape(n_chan, side, side)
        off += 4 * n_chan * side * side
    return PatchDump(planes=planes, stats_raw=raw, stats_norm=norm,
                     gt_classes=gts, path=path)
