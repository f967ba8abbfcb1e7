"""Torch mirror of the two-branch patch classifier.

Image branch: 3x3 conv, two residual separable modules, closing 3x3
conv, global average pooling.  Stats branch: two fully connected layers
on the normalized 7-vector.  Head: concat + linear to the five classes.
Weight tensors translate one-to-one into the LCNW layout the inference
engine loads.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .lcnw import ExportError, write_checkpoint

CONV_WIDTHS = (16, 32, 48, 24)
STATS_WIDTHS = (24, 16)
N_CLASSES = 5
N_STATS = 7
CLASS_NAMES = ("None", "Car", "Truck", "Bike", "Pedestrian")


class ResidualSeparable(nn.Module):
    """Two depthwise-separable convs and 2x2 max pooling in parallel to a
    strided 1x1 shortcut; paths sum."""

    def __init__(self, cin: int, cout: int):
        super().__init__()
        self.dw1 = nn.Conv2d(cin, cin, 3, padding=1, groups=cin)
        self.pw1 = nn.Conv2d(cin, cout, 1)
        self.dw2 = nn.Conv2d(cout, cout, 3, padding=1, groups=cout)
        self.pw2 = nn.Conv2d(cout, cout, 1)
        self.pool = nn.MaxPool2d(2)
        self.shortcut = nn.Conv2d(cin, cout, 1, stride=2)

    def forward(self, x):
        m = self.pw1(self.dw1(x))
        m = F.relu(m)
        m = self.pw2(self.dw2(m))
        m = self.pool(m)
        return m + self.shortcut(x)


class PatchClassifier(nn.Module):
    def __init__(self, n_planes: int, patch_side: int = 32,
                 conv_widths=CONV_WIDTHS, stats_widths=STATS_WIDTHS):
        super().__init__()
        if patch_side % 4 != 0:
            raise ValueError("patch side must be a multiple of 4")
        c1, c2, c3, c4 = conv_widths
        s1, s2 = stats_widths
        self.n_planes = n_planes
        self.patch_side = patch_side
        self.conv_widths = tuple(conv_widths)
        self.stats_widths = tuple(stats_widths)

        self.conv_in = nn.Conv2d(n_planes, c1, 3, padding=1)
        self.module1 = ResidualSeparable(c1, c2)
        self.module2 = ResidualSeparable(c2, c3)
        self.conv_out = nn.Conv2d(c3, c4, 3, padding=1)
        self.fc1 = nn.Linear(N_STATS, s1)
        self.fc2 = nn.Linear(s1, s2)
        self.head = nn.Linear(c4 + s2, N_CLASSES)

    def forward(self, planes, stats):
        x = F.relu(self.conv_in(planes))
        x = self.module1(x)
        x = self.module2(x)
        x = F.relu(self.conv_out(x))
        feat = x.mean(dim=(2, 3))
        s = F.relu(self.fc1(stats))
        s = F.relu(self.fc2(s))
        return self.head(torch.cat([feat, s], dim=1))

    def param_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def _conv_weight(conv: nn.Conv2d):
    # torch (Cout, Cin, kh, kw) -> file layout (kh, kw, Cin, Cout)
    return conv.weight.detach().permute(2, 3, 1, 0).numpy()


def _dw_weight(conv: nn.Conv2d):
    # torch depthwise (C, 1, 3, 3) -> (3, 3, C)
    return conv.weight.detach().squeeze(1).permute(1, 2, 0).numpy()


def _pw_weight(conv: nn.Conv2d):
    # torch (Cout, Cin, 1, 1) -> (Cin, Cout)
    return conv.weight.detach().squeeze(3).squeeze(2).t().numpy()


def _fc_weight(fc: nn.Linear):
    # torch (M, N) -> (N, M)
    return fc.weight.detach().t().numpy()


def export_tensors(model: PatchClassifier):
    def bias(layer):
        return layer.bias.detach().numpy()

    def sep(prefix, dw, pw):
        return [
            (f"{prefix}.dw.weight", "depthwise3x3", _dw_weight(dw)),
            (f"{prefix}.dw.bias", "depthwise3x3", bias(dw)),
            (f"{prefix}.pw.weight", "pointwise1x1", _pw_weight(pw)),
            (f"{prefix}.pw.bias", "pointwise1x1", bias(pw)),
        ]

    def module(prefix, mod):
        return (sep(f"{prefix}.sep1", mod.dw1, mod.pw1)
                + sep(f"{prefix}.sep2", mod.dw2, mod.pw2)
                + [(f"{prefix}.shortcut.weight", "pointwise1x1",
                    _pw_weight(mod.shortcut)),
                   (f"{prefix}.shortcut.bias", "pointwise1x1",
                    bias(mod.shortcut))])

    return (
        [("image.conv_in.weight", "conv3x3", _conv_weight(model.conv_in)),
         ("image.conv_in.bias", "conv3x3", bias(model.conv_in))]
        + module("image.module1", model.module1)
        + module("image.module2", model.module2)
        + [("image.conv_out.weight", "conv3x3", _conv_weight(model.conv_out)),
           ("image.conv_out.bias", "conv3x3", bias(model.conv_out)),
           ("stats.fc1.weight", "dense", _fc_weight(model.fc1)),
           ("stats.fc1.bias", "dense", bias(model.fc1)),
           ("stats.fc2.weight", "dense", _fc_weight(model.fc2)),
           ("stats.fc2.bias", "dense", bias(model.fc2)),
           ("head.fc.weight", "dense", _fc_weight(model.head)),
           ("head.fc.bias", "dense", bias(model.head))]
    )


def export_weights(model: PatchClassifier, path, channels: tuple[str, ...]) -> None:
    """Write the LCNW checkpoint the inference engine loads.

    ``channels`` names the planes the model was trained on, mask
    excluded; it must match the model's input width.
    """
    if model.n_planes != len(channels) + 1:
        raise ExportError(
            f"model has {model.n_planes} input planes, channel list "
            f"{channels} implies {len(channels) + 1}")
    if model.conv_widths != CONV_WIDTHS or model.stats_widths != STATS_WIDTHS:
        raise ExportError("refusing to export a non-reference architecture")
    metadata = {
        "format": "lcnw",
        "channels": ",".join(channels),
        "patch_side": str(model.patch_side),
        "classes": ",".join(CLASS_NAMES),
        "conv_widths": ",".join(str(w) for w in model.conv_widths),
        "stats_widths": ",".join(str(w) for w in model.stats_widths),
    }
    write_checkpoint(path, metadata, export_tensors(model))
