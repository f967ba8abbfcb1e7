"""Writer for LCNW weight checkpoints.

Little-endian: magic ``LCNW``, version u16 = 1, layer count u16; per
layer: name length u16 + UTF-8 name, kind code u8, dtype u8 (0 float32,
1 raw UTF-8 bytes), ndim u8, dims u32 each, payload row-major; CRC32
over everything preceding closes the file.  Entry one is a metadata
pseudo-layer (kind 255) of key=value lines.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"LCNW"
VERSION = 1

KIND = {
    "conv3x3": 0,
    "depthwise3x3": 1,
    "pointwise1x1": 2,
    "dense": 3,
    "metadata": 255,
}
DTYPE_F32 = 0
DTYPE_BYTES = 1


class ExportError(ValueError):
    pass


def _entry(name: str, kind: int, dtype: int, dims, payload: bytes) -> bytes:
    name_b = name.encode("utf-8")
    out = struct.pack("<H", len(name_b)) + name_b
    out += struct.pack("<BBB", kind, dtype, len(dims))
    out += struct.pack(f"<{len(dims)}I", *dims)
    return out + payload


def write_checkpoint(path: str | Path, metadata: dict[str, str],
                     tensors: list[tuple[str, str, np.ndarray]]) -> None:
    """metadata key=value lines plus (name, kind, float32 array) entries."""
    body = bytearray()
    body += MAGIC
    body += struct.pack("<HH", VERSION, len(tensors) + 1)

    meta = ("\n".join(f"{k}={v}" for k, v in metadata.items()) + "\n")
    meta_b = meta.encode("utf-8")
    body += _entry("meta", KIND["metadata"], DTYPE_BYTES, (len(meta_b),),
                   meta_b)
    for name, kind, arr in tensors:
        if kind not in KIND:
            raise ExportError(f"unknown tensor kind {kind!r} for {name}")
        arr32 = np.ascontiguousarray(arr, dtype="<f4")
        body += _entry(name, KIND[kind], DTYPE_F32, tuple(arr32.shape),
                       arr32.tobytes())
    crc = zlib.crc32(bytes(body)) & 0xFFFFFFFF
    Path(path).write_bytes(bytes(body) + struct.pack("<I", crc))


def read_checkpoint(path: str | Path):
    """Round-trip check helper: (metadata dict, {name: array})."""
    data = Path(path).read_bytes()
    body, crc = data[:-4], struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise ExportError(f"{path}: CRC mismatch")
    if body[:4] != MAGIC:
        raise ExportError(f"{path}: bad magic")
    _, n_layers = struct.unpack_from("<HH", body, 4)
    off = 8
    metadata: dict[str, str] = {}
    tensors: dict[str, np.ndarray] = {}
    for _ in range(n_layers):
        (name_len,) = struct.unpack_from("<H", body, off)
        off += 2
        name = body[off:off + name_len].decode("utf-8")
        off += name_len
        kind, dtype, ndim = struct.unpack_from("<BBB", body, off)
        off += 3
        dims = struct.unpack_from(f"<{ndim}I", body, off)
        off += 4 * ndim
        n_elem = int(np.prod(dims)) if dims else 1
        if dtype == DTYPE_BYTES:
            text = body[off:off + n_elem].decode("utf-8")
            off += n_elem
            for line in text.splitlines():
                if "=" in line:
                    k, _, v = line.partition("=")
                    metadata[k] = v
        else:
            tensors[name] = np.frombuffer(body, "<f4", n_elem,
                                          off).reshape(dims).copy()
            off += 4 * n_elem
    return metadata, tensors
