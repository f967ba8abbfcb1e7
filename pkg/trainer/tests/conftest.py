import pytest

from patchtrainer.dataset import generate_synthetic_dataset
from patchtrainer.scenes import GridSpec

N_PER_CLASS = 48
SEED = 7


@pytest.fixture(scope="session")
def synth_data(tmp_path_factory):
    """One shared synthetic dataset rendered through the inference CLI."""
    root = tmp_path_factory.mktemp("synth")
    samples = generate_synthetic_dataset(
        root, seed=SEED, n_per_class=N_PER_CLASS, n_folds=8,
        grid=GridSpec(height=64, width=1024))
    return {"root": root, "samples": samples}
