import numpy as np
import pytest
import torch

from patchtrainer.dataset import split_by_sequence
from patchtrainer.train import TrainConfig, TrainingDiverged, evaluate, train


def split(synth_data):
    return split_by_sequence(synth_data["samples"], {"07"})


def test_short_training_learns(synth_data):
    tr, va = split(synth_data)
    cfg = TrainConfig(channels=("intensity", "hnv", "vnv"), epochs=6, seed=0)
    result = train(tr, va, cfg)
    assert result.val_accuracy > 0.5
    assert result.epochs_run <= 6
    assert len(result.history) == result.epochs_run


def test_training_deterministic(synth_data):
    tr, va = split(synth_data)
    cfg = TrainConfig(channels=("intensity",), epochs=3, seed=11)
    a = train(tr, va, cfg)
    b = train(tr, va, cfg)
    assert a.val_accuracy == b.val_accuracy
    assert a.history == b.history
    for ka, pa in a.model.state_dict().items():
        assert torch.equal(pa, b.model.state_dict()[ka])


def test_zero_epochs_accuracy_near_chance(synth_data):
    tr, va = split(synth_data)
    cfg = TrainConfig(channels=("intensity", "hnv", "vnv"), epochs=0, seed=0)
    result = train(tr, va, cfg)
    assert result.epochs_run == 0
    assert result.val_accuracy < 0.45  # untrained net stays near 1/5


def test_divergence_detected(synth_data):
    from patchtrainer.dataset import SampleSet

    tr, va = split(synth_data)
    poisoned = SampleSet(planes=tr.planes.copy(), stats=tr.stats.copy(),
                         labels=tr.labels.copy(), sequences=tr.sequences)
    poisoned.stats[:] = np.nan
    with pytest.raises(TrainingDiverged):
        train(poisoned, va, TrainConfig(epochs=2, seed=0))


def test_evaluate_matches_training_history(synth_data):
    tr, va = split(synth_data)
    cfg = TrainConfig(channels=("intensity",), epochs=2, seed=3, patience=99)
    result = train(tr, va, cfg)
    acc = evaluate(result.model, va, cfg.channels)
    assert acc == pytest.approx(max(result.history))
