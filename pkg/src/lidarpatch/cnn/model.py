"""The two-branch patch classifier and its reference dimensions.

Image branch: 3x3 conv, two residual separable modules (each halves the
spatial size), a closing 3x3 conv, global average pooling.  Stats branch:
two fully connected layers on the normalized 7-vector.  The pooled image
features and the stats features are concatenated and mapped to the five
class scores.  A residual separable module runs two depthwise-separable
convolutions and 2x2 max pooling in parallel to a strided 1x1 shortcut
and sums the paths.

With the default four input planes the reference dimensions give 20 725
parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..pointcloud import CLASS_NAMES, ClassId
from . import ops

DEFAULT_CONV_WIDTHS = (16, 32, 48, 24)
DEFAULT_STATS_WIDTHS = (24, 16)
N_CLASSES = 5
N_STATS = 7


@dataclass(frozen=True)
class ModelMeta:
    """Everything needed to rebuild the layer shapes."""

    channels: tuple[str, ...] = ("intensity", "hnv", "vnv")
    patch_side: int = 32
    class_names: tuple[str, ...] = CLASS_NAMES
    conv_widths: tuple[int, int, int, int] = DEFAULT_CONV_WIDTHS
    stats_widths: tuple[int, int] = DEFAULT_STATS_WIDTHS

    @property
    def n_planes(self) -> int:
        return len(self.channels) + 1  # implicit mask plane

    def __post_init__(self):
        if len(self.class_names) != N_CLASSES:
            raise ValueError("exactly five classes expected")
        if self.patch_side < 4 or self.patch_side % 4 != 0:
            raise ValueError("patch_side must be a positive multiple of 4")


@dataclass
class Conv:
    w: np.ndarray  # (3, 3, Cin, Cout)
    b: np.ndarray


@dataclass
class Separable:
    dw_w: np.ndarray  # (3, 3, C)
    dw_b: np.ndarray
    pw_w: np.ndarray  # (C, Cout)
    pw_b: np.ndarray


@dataclass
class ResidualModule:
    sep1: Separable
    sep2: Separable
    sc_w: np.ndarray  # (Cin, Cout) strided shortcut
    sc_b: np.ndarray


@dataclass
class Dense:
    w: np.ndarray  # (K, M)
    b: np.ndarray


@dataclass
class Model:
    meta: ModelMeta
    conv_in: Conv
    module1: ResidualModule
    module2: ResidualModule
    conv_out: Conv
    stats_fc1: Dense
    stats_fc2: Dense
    head: Dense

    def tensors(self) -> list[tuple[str, str, np.ndarray]]:
        """(name, kind, array) triples in the canonical file order."""
        out = []

        def conv(prefix, layer):
            out.append((f"{prefix}.weight", "conv3x3", layer.w))
            out.append((f"{prefix}.bias", "conv3x3", layer.b))

        def sep(prefix, layer):
            out.append((f"{prefix}.dw.weight", "depthwise3x3", layer.dw_w))
            out.append((f"{prefix}.dw.bias", "depthwise3x3", layer.dw_b))
            out.append((f"{prefix}.pw.weight", "pointwise1x1", layer.pw_w))
            out.append((f"{prefix}.pw.bias", "pointwise1x1", layer.pw_b))

        def module(prefix, mod):
            sep(f"{prefix}.sep1", mod.sep1)
            sep(f"{prefix}.sep2", mod.sep2)
            out.append((f"{prefix}.shortcut.weight", "pointwise1x1", mod.sc_w))
            out.append((f"{prefix}.shortcut.bias", "pointwise1x1", mod.sc_b))

        def fc(prefix, layer):
            out.append((f"{prefix}.weight", "dense", layer.w))
            out.append((f"{prefix}.bias", "dense", layer.b))

        conv("image.conv_in", self.conv_in)
        module("image.module1", self.module1)
        module("image.module2", self.module2)
        conv("image.conv_out", self.conv_out)
        fc("stats.fc1", self.stats_fc1)
        fc("stats.fc2", self.stats_fc2)
        fc("head.fc", self.head)
        return out


def tensor_shapes(meta: ModelMeta) -> dict[str, tuple[int, ...]]:
    """Expected shape of every named tensor for the given metadata."""
    cin = meta.n_planes
    c1, c2, c3, c4 = meta.conv_widths
    s1, s2 = meta.stats_widths
    shapes: dict[str, tuple[int, ...]] = {}

    def module(prefix, w_in, w_out):
        shapes[f"{prefix}.sep1.dw.weight"] = (3, 3, w_in)
        shapes[f"{prefix}.sep1.dw.bias"] = (w_in,)
        shapes[f"{prefix}.sep1.pw.weight"] = (w_in, w_out)
        shapes[f"{prefix}.sep1.pw.bias"] = (w_out,)
        shapes[f"{prefix}.sep2.dw.weight"] = (3, 3, w_out)
        shapes[f"{prefix}.sep2.dw.bias"] = (w_out,)
        shapes[f"{prefix}.sep2.pw.weight"] = (w_out, w_out)
        shapes[f"{prefix}.sep2.pw.bias"] = (w_out,)
        shapes[f"{prefix}.shortcut.weight"] = (w_in, w_out)
        shapes[f"{prefix}.shortcut.bias"] = (w_out,)

    shapes["image.conv_in.weight"] = (3, 3, cin, c1)
    shapes["image.conv_in.bias"] = (c1,)
    module("image.module1", c1, c2)
    module("image.module2", c2, c3)
    shapes["image.conv_out.weight"] = (3, 3, c3, c4)
    shapes["image.conv_out.bias"] = (c4,)
    shapes["stats.fc1.weight"] = (N_STATS, s1)
    shapes["stats.fc1.bias"] = (s1,)
    shapes["stats.fc2.weight"] = (s1, s2)
    shapes["stats.fc2.bias"] = (s2,)
    shapes["head.fc.weight"] = (c4 + s2, N_CLASSES)
    shapes["head.fc.bias"] = (N_CLASSES,)
    return shapes


def build_model(meta: ModelMeta, tensors: dict[str, np.ndarray]) -> Model:
    """Assemble a Model from named tensors, validating every shape."""
    expected = tensor_shapes(meta)
    missing = set(expected) - set(tensors)
    if missing:
        raise ops.ShapeError(f"missing tensors: {sorted(missing)}")
    for name, shape in expected.items():
        if tuple(tensors[name].shape) != shape:
            raise ops.ShapeError(
                f"{name}: shape {tensors[name].shape}, expected {shape}")

    t = {k: np.ascontiguousarray(v, dtype=np.float32) for k, v in tensors.items()}

    def sep(prefix):
        return Separable(t[f"{prefix}.dw.weight"], t[f"{prefix}.dw.bias"],
                         t[f"{prefix}.pw.weight"], t[f"{prefix}.pw.bias"])

    def module(prefix):
        return ResidualModule(sep(f"{prefix}.sep1"), sep(f"{prefix}.sep2"),
                              t[f"{prefix}.shortcut.weight"],
                              t[f"{prefix}.shortcut.bias"])

    return Model(
        meta=meta,
        conv_in=Conv(t["image.conv_in.weight"], t["image.conv_in.bias"]),
        module1=module("image.module1"),
        module2=module("image.module2"),
        conv_out=Conv(t["image.conv_out.weight"], t["image.conv_out.bias"]),
        stats_fc1=Dense(t["stats.fc1.weight"], t["stats.fc1.bias"]),
        stats_fc2=Dense(t["stats.fc2.weight"], t["stats.fc2.bias"]),
        head=Dense(t["head.fc.weight"], t["head.fc.bias"]),
    )


def init_random(seed: int, meta: ModelMeta = ModelMeta()) -> Model:
    """Seeded uniform [-0.05, 0.05] weights; same seed, same model."""
    rng = np.random.default_rng(seed)
    tensors = {
        name: rng.uniform(-0.05, 0.05, size=shape).astype(np.float32)
        for name, shape in tensor_shapes(meta).items()
    }
    return build_model(meta, tensors)


def param_count(model: Model) -> int:
    return sum(arr.size for _, _, arr in model.tensors())


def residual_separable_module(x: np.ndarray, mod: ResidualModule) -> np.ndarray:
    """Main path sep -> relu -> sep -> maxpool, plus strided 1x1 shortcut."""
    main = ops.depthwise_separable(x, mod.sep1.dw_w, mod.sep1.dw_b,
                                   mod.sep1.pw_w, mod.sep1.pw_b)
    main = ops.relu(main)
    main = ops.depthwise_separable(main, mod.sep2.dw_w, mod.sep2.dw_b,
                                   mod.sep2.pw_w, mod.sep2.pw_b)
    main = ops.maxpool2x2(main)
    shortcut = ops.pointwise_conv(x, mod.sc_w, mod.sc_b, stride=2)
    return main + shortcut


def forward_logits(model: Model, batch) -> np.ndarray:
    """(N, 5) pre-softmax scores; pure function of (model, batch)."""
    meta = model.meta
    planes = batch.planes
    if planes.ndim != 4 or planes.shape[1] != meta.n_planes \
            or planes.shape[2:] != (meta.patch_side, meta.patch_side):
        raise ops.ShapeError(
            f"batch planes {planes.shape} do not match model "
            f"({meta.n_planes} x {meta.patch_side} x {meta.patch_side})")
    if batch.stats_norm.shape != (planes.shape[0], N_STATS):
        raise ops.ShapeError(f"batch stats {batch.stats_norm.shape}")

    x = np.ascontiguousarray(planes.transpose(0, 2, 3, 1), dtype=np.float32)
    x = ops.relu(ops.conv2d_3x3(x, model.conv_in.w, model.conv_in.b))
    x = residual_separable_module(x, model.module1)
    x = residual_separable_module(x, model.module2)
    x = ops.relu(ops.conv2d_3x3(x, model.conv_out.w, model.conv_out.b))
    img_feat = ops.global_avg_pool(x)

    s = np.ascontiguousarray(batch.stats_norm, dtype=np.float32)
    s = ops.relu(ops.dense(s, model.stats_fc1.w, model.stats_fc1.b))
    s = ops.relu(ops.dense(s, model.stats_fc2.w, model.stats_fc2.b))

    merged = np.concatenate([img_feat, s], axis=1)
    return ops.dense(merged, model.head.w, model.head.b)


def forward(model: Model, batch) -> np.ndarray:
    """(N, 5) class probabilities, rows summing to 1."""
    return ops.softmax(forward_logits(model, batch))


def predict(scores: np.ndarray) -> tuple[ClassId, float]:
    """Argmax of one score row; ties break toward the lowest class id."""
    idx = int(np.argmax(scores))
    return ClassId(idx), float(scores[idx])
