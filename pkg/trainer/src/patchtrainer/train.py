"""Training loop for the patch classifier.

Cross-entropy with per-class sampling weights, Adam, early stop on a
validation-accuracy plateau.  Deterministic for a fixed seed (CPU,
single-process data loading).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch.utils.data import DataLoader, TensorDataset, WeightedRandomSampler

from .dataset import SampleSet, select_channels
from .model import PatchClassifier


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    channels: tuple[str, ...] = ("intensity", "hnv", "vnv")
    epochs: int = 30
    batch_size: int = 64
    lr: float = 3e-3
    seed: int = 0
    patience: int = 5
    patch_side: int = 32
    # desk-scale sets are small; resample so an epoch has enough steps
    min_samples_per_epoch: int = 512


@dataclass
class TrainResult:
    model: PatchClassifier
    val_accuracy: float
    epochs_run: int
    history: list[float] = field(default_factory=list)  # val acc per epoch


def _tensors(samples: SampleSet, channels):
    planes = torch.from_numpy(select_channels(samples, channels))
    stats = torch.from_numpy(samples.stats.astype(np.float32))
    labels = torch.from_numpy(samples.labels.astype(np.int64))
    return TensorDataset(planes, stats, labels)


@torch.no_grad()
def evaluate(model: PatchClassifier, samples: SampleSet,
             channels: tuple[str, ...]) -> float:
    model.eval()
    ds = _tensors(samples, channels)
    loader = DataLoader(ds, batch_size=256)
    hits = 0
    for planes, stats, labels in loader:
        logits = model(planes, stats)
        hits += int((logits.argmax(dim=1) == labels).sum())
    return hits / len(samples)


def train(train_set: SampleSet, val_set: SampleSet,
          cfg: TrainConfig = TrainConfig()) -> TrainResult:
    torch.manual_seed(cfg.seed)
    ds = _tensors(train_set, cfg.channels)

    counts = np.maximum(train_set.class_counts(), 1)
    per_class = 1.0 / counts
    sample_weights = torch.from_numpy(
        per_class[train_set.labels].astype(np.float64))
    sampler = WeightedRandomSampler(
        sample_weights,
        num_samples=max(len(ds), cfg.min_samples_per_epoch),
        replacement=True,
        generator=torch.Generator().manual_seed(cfg.seed))
    loader = DataLoader(ds, batch_size=cfg.batch_size, sampler=sampler)

    model = PatchClassifier(n_planes=len(cfg.channels) + 1,
                            patch_side=cfg.patch_side)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    loss_fn = torch.nn.CrossEntropyLoss()

    best_acc = -1.0
    best_state = {k: v.clone() for k, v in model.state_dict().items()}
    best_epoch = 0
    history: list[float] = []
    for epoch in range(cfg.epochs):
        model.train()
        for planes, stats, labels in loader:
            opt.zero_grad()
            loss = loss_fn(model(planes, stats), labels)
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"loss became {loss.item()} in epoch {epoch}")
            loss.backward()
            opt.step()
        acc = evaluate(model, val_set, cfg.channels)
        history.append(acc)
        if acc > best_acc:
            best_acc = acc
            best_state = {k: v.clone() for k, v in model.state_dict().items()}
            best_epoch = epoch
        elif epoch - best_epoch >= cfg.patience:
            break

    model.load_state_dict(best_state)
    if cfg.epochs == 0:
        best_acc = evaluate(model, val_set, cfg.channels)
    return TrainResult(model=model, val_accuracy=best_acc,
                       epochs_run=len(history), history=history)
