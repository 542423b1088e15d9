"""Shared test fixtures for sitr-sim.

Provides:
- Tiny sensor configurations (fixed and sampled)
- A tiny encoder configuration that trains in seconds
- Generated micro-datasets (session scoped, built once)
- A briefly pre-trained checkpoint on the micro-dataset
"""

import pytest

from src.dataset import DatasetReader, generate_dataset
from src.encoder import EncoderConfig
from src.objectives import LossWeights
from src.optics import SensorConfig, sample_sensor_config
from src.pretrain import TrainConfig, pretrain, save_run

# Small enough for unit tests, large enough for 8×8 patches
TINY_RESOLUTION = 32


@pytest.fixture
def sensor_config():
    """Three RGB point lights on the sides, mid-range gel."""
    return SensorConfig(sensor_id="test-a", resolution=TINY_RESOLUTION, sensing_area_cm2=4.0)


@pytest.fixture
def sensor_pair():
    """Two independently sampled sensors."""
    return [sample_sensor_config(3, i, TINY_RESOLUTION) for i in range(2)]


@pytest.fixture
def tiny_encoder_config():
    """H=32, P=8, D=32, depth 2, heads 2, K=4."""
    return EncoderConfig(image_size=32, patch_size=8, embed_dim=32, depth=2, num_heads=2, calib_count=4)


@pytest.fixture(scope="session")
def micro_dataset(tmp_path_factory):
    """4 sensors × 16 contacts at 32², k18 calibration, pose-labelled in pairs."""
    root = tmp_path_factory.mktemp("micro")
    generate_dataset(
        4, 16, seed=5, out_dir=root, calib_mode="k18", resolution=TINY_RESOLUTION,
        presses_per_indenter=2,
    )
    return root


@pytest.fixture(scope="session")
def micro_reader(micro_dataset):
    return DatasetReader(micro_dataset)


@pytest.fixture(scope="session")
def micro_checkpoint(micro_reader, tmp_path_factory):
    """Tiny encoder pre-trained for one epoch on the micro-dataset (k4)."""
    config = EncoderConfig(image_size=32, patch_size=8, embed_dim=32, depth=2, num_heads=2, calib_count=4)
    train = TrainConfig(epochs=1, batch_contacts=4, lr=1e-3, seed=0, weights=LossWeights(), calib_mode="k4")
    result = pretrain(micro_reader, config, train)
    return save_run(result, micro_reader, train, tmp_path_factory.mktemp("ckpt") / "tiny")
