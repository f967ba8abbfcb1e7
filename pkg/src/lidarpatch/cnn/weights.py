"""Binary weight checkpoint format (magic ``LCNW``).

Little-endian throughout: magic (4 bytes), version u16 = 1, layer count
u16; per layer: name length u16 + UTF-8 name, kind code u8, dtype u8
(0 = float32, 1 = raw UTF-8 bytes), ndim u8, each dim u32, payload
row-major; the file ends with a CRC32 (IEEE) over all preceding bytes.
The first entry is a metadata pseudo-layer (kind 255) whose payload is
key=value lines carrying channel config, patch side, class names, and the
layer widths.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .model import Model, ModelMeta, build_model

MAGIC = b"LCNW"
VERSION = 1

KIND_CODES = {
    "conv3x3": 0,
    "depthwise3x3": 1,
    "pointwise1x1": 2,
    "dense": 3,
    "maxpool2x2": 4,
    "relu": 5,
    "batchnorm": 6,
    "globalavgpool": 7,
    "concat": 8,
    "softmax": 9,
    "residual_add": 10,
    "metadata": 255,
}

DTYPE_F32 = 0
DTYPE_BYTES = 1


class WeightFormatError(ValueError):
    """Bad magic, version, CRC, or inconsistent shape table."""


def _meta_payload(meta: ModelMeta) -> bytes:
    lines = [
        "format=lcnw",
        f"channels={','.join(meta.channels)}",
        f"patch_side={meta.patch_side}",
        f"classes={','.join(meta.class_names)}",
        f"conv_widths={','.join(str(w) for w in meta.conv_widths)}",
        f"stats_widths={','.join(str(w) for w in meta.stats_widths)}",
    ]
    return ("\n".join(lines) + "\n").encode("utf-8")


def _parse_meta(payload: bytes) -> ModelMeta:
    values: dict[str, str] = {}
    for line in payload.decode("utf-8").splitlines():
        line = line.strip()
        if not line or "=" not in line:
            continue
        key, _, val = line.partition("=")
        values[key] = val
    try:
        return ModelMeta(
            channels=tuple(c for c in values["channels"].split(",") if c),
            patch_side=int(values["patch_side"]),
            class_names=tuple(values["classes"].split(",")),
            conv_widths=tuple(int(v) for v in values["conv_widths"].split(",")),
            stats_widths=tuple(int(v) for v in values["stats_widths"].split(",")),
        )
    except (KeyError, ValueError) as exc:
        raise WeightFormatError(f"bad metadata block: {exc}") from exc


def _entry(name: str, kind_code: int, dtype: int, dims: tuple[int, ...],
           payload: bytes) -> bytes:
    name_b = name.encode("utf-8")
    head = struct.pack("<H", len(name_b)) + name_b
    head += struct.pack("<BBB", kind_code, dtype, len(dims))
    head += struct.pack(f"<{len(dims)}I", *dims)
    return head + payload


def save_weights(model: Model, path: str | Path) -> None:
    """Serialize; save -> load round-trips tensors bit-identically."""
    body = bytearray()
    body += MAGIC
    tensors = model.tensors()
    body += struct.pack("<HH", VERSION, len(tensors) + 1)

    meta = _meta_payload(model.meta)
    body += _entry("meta", KIND_CODES["metadata"], DTYPE_BYTES,
                   (len(meta),), meta)
    for name, kind, arr in tensors:
        arr32 = np.ascontiguousarray(arr, dtype="<f4")
        body += _entry(name, KIND_CODES[kind], DTYPE_F32,
                       tuple(arr32.shape), arr32.tobytes())

    crc = zlib.crc32(bytes(body)) & 0xFFFFFFFF
    Path(path).write_bytes(bytes(body) + struct.pack("<I", crc))


def load_weights(path: str | Path) -> Model:
    """Parse and CRC-check a checkpoint, rebuilding the model."""
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise WeightFormatError(f"{path}: truncated file")
    body, crc_stored = data[:-4], struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(body) & 0xFFFFFFFF != crc_stored:
        raise WeightFormatError(f"{path}: CRC mismatch")
    if body[:4] != MAGIC:
        raise WeightFormatError(f"{path}: bad magic {body[:4]!r}")
    version, n_layers = struct.unpack_from("<HH", body, 4)
    if version != VERSION:
        raise WeightFormatError(f"{path}: unsupported version {version}")

    off = 8
    meta: ModelMeta | None = None
    tensors: dict[str, np.ndarray] = {}
    for _ in range(n_layers):
        try:
            (name_len,) = struct.unpack_from("<H", body, off)
            off += 2
            name = body[off:off + name_len].decode("utf-8")
            off += name_len
            kind, dtype, ndim = struct.unpack_from("<BBB", body, off)
            off += 3
            dims = struct.unpack_from(f"<{ndim}I", body, off)
            off += 4 * ndim
        except struct.error as exc:
            raise WeightFormatError(f"{path}: truncated layer table") from exc
        n_elem = int(np.prod(dims)) if dims else 1
        if dtype == DTYPE_BYTES:
            payload = body[off:off + n_elem]
            if len(payload) != n_elem:
                raise WeightFormatError(f"{path}: truncated payload in {name}")
            off += n_elem
            if kind == KIND_CODES["metadata"]:
                meta = _parse_meta(payload)
        elif dtype == DTYPE_F32:
            nbytes = 4 * n_elem
            if off + nbytes > len(body):
                raise WeightFormatError(f"{path}: payload overruns file in {name}")
            tensors[name] = np.frombuffer(
                body, "<f4", n_elem, off).reshape(dims).copy()
            off += nbytes
        else:
            raise WeightFormatError(f"{path}: unknown dtype {dtype} in {name}")
    if off != len(body):
        raise WeightFormatError(
            f"{path}: {len(body) - off} trailing bytes after layer table")
    if meta is None:
        raise WeightFormatError(f"{path}: missing metadata pseudo-layer")
    return build_model(meta, tensors)
