import numpy as np
import pytest

from patchtrainer.dataset import (
    DatasetError,
    DumpEntry,
    SampleSet,
    discover_dumps,
    load_samples,
    select_channels,
    split_by_sequence,
    trim_uniform,
)


def fake_samples(seq_counts: dict[str, int], n_planes=8, side=4, seed=0):
    rng = np.random.default_rng(seed)
    total = sum(seq_counts.values())
    seqs = np.concatenate([np.full(n, s, dtype=object)
                           for s, n in seq_counts.items()])
    return SampleSet(
        planes=rng.uniform(0, 1, (total, n_planes, side, side)).astype(
            np.float32),
        stats=rng.uniform(0, 1, (total, 7)).astype(np.float32),
        labels=rng.integers(0, 5, total).astype(np.int64),
        sequences=seqs,
    )


class TestSplit:
    def test_holdout_sequence_goes_to_val(self):
        seq_counts = {f"{i:02d}": 10 for i in list(range(8)) + [9, 10]}
        seq_counts["08"] = 10
        samples = fake_samples(seq_counts)
        train, val = split_by_sequence(samples, {"08"})
        assert set(val.sequences.tolist()) == {"08"}
        assert "08" not in set(train.sequences.tolist())
        assert len(train) + len(val) == len(samples)

    def test_split_is_pure_function_of_sequences(self):
        samples = fake_samples({"00": 5, "01": 5, "02": 5})
        a = split_by_sequence(samples, {"02"})
        b = split_by_sequence(samples, {"02"})
        assert np.array_equal(a[1].labels, b[1].labels)

    def test_empty_side_rejected(self):
        samples = fake_samples({"00": 5})
        with pytest.raises(DatasetError):
            split_by_sequence(samples, {"00"})
        with pytest.raises(DatasetError):
            split_by_sequence(samples, {"99"})


class TestIngestion:
    def test_empty_dump_set_rejected(self):
        with pytest.raises(DatasetError):
            load_samples([])

    def test_duplicate_entries_deduplicated(self, synth_data):
        entries = discover_dumps(synth_data["root"])
        once = load_samples(entries)
        twice = load_samples(entries + entries)
        assert len(once) == len(twice)
        assert np.array_equal(once.labels, twice.labels)

    def test_none_mode_relabels_to_reject_class(self, synth_data):
        entries = [e for e in discover_dumps(synth_data["root"])
                   if e.mode == "none"]
        samples = load_samples(entries)
        assert set(samples.labels.tolist()) == {0}

    def test_discovery_finds_both_modes(self, synth_data):
        entries = discover_dumps(synth_data["root"])
        modes = {e.mode for e in entries}
        assert modes == {"gt", "none"}


class TestTrim:
    def test_exact_uniform(self):
        samples = fake_samples({"00": 300}, seed=1)
        trimmed = trim_uniform(samples, 20)
        assert trimmed.class_counts().tolist() == [20] * 5

    def test_insufficient_class_rejected(self):
        samples = fake_samples({"00": 300}, seed=1)
        samples.labels[:] = 0
        with pytest.raises(DatasetError):
            trim_uniform(samples, 10)


class TestChannelSelection:
    def test_subset_order_and_mask(self):
        samples = fake_samples({"00": 4})
        out = select_channels(samples, ("intensity", "hnv", "vnv"))
        assert out.shape[1] == 4
        assert np.array_equal(out[:, 0], samples.planes[:, 3])
        assert np.array_equal(out[:, 1], samples.planes[:, 5])
        assert np.array_equal(out[:, 2], samples.planes[:, 6])
        assert np.array_equal(out[:, 3], samples.planes[:, 7])

    def test_mask_only(self):
        samples = fake_samples({"00": 4})
        out = select_channels(samples, ())
        assert out.shape[1] == 1
        assert np.array_equal(out[:, 0], samples.planes[:, 7])

    def test_metric_channels_scaled(self):
        samples = fake_samples({"00": 4})
        samples.planes[:, 0] = 40.0  # x in meters
        out = select_channels(samples, ("x",))
        assert np.allclose(out[:, 0], 0.5)

    def test_unknown_channel_rejected(self):
        samples = fake_samples({"00": 4})
        with pytest.raises(DatasetError):
            select_channels(samples, ("wavelength",))
