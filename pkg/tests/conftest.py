import pytest

from spacepose.synthgen import Dataset, DatasetSpec, generate_dataset, make_satellite


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Five short boxsat sequences at 64 px: 3/1/1 sequence split."""
    root = tmp_path_factory.mktemp("data") / "tiny"
    spec = DatasetSpec(n_sequences=5, frames_per_sequence=4, image_size=64, seed=3)
    generate_dataset(spec, make_satellite("boxsat"), root)
    return Dataset(root)


@pytest.fixture(scope="session")
def occluded_dataset(tmp_path_factory):
    """Every frame fully covered by the occluder rectangle."""
    root = tmp_path_factory.mktemp("data") / "occluded"
    spec = DatasetSpec(n_sequences=5, frames_per_sequence=3, image_size=64, occluder_prob=1.0,
                       occluder_size=(1.0, 1.0), seed=5)
    generate_dataset(spec, make_satellite("boxsat"), root)
    return Dataset(root)
