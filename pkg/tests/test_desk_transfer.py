"""Desk-scale transfer experiments.

These pre-train the full desk encoder several times and take hours on a CPU.
Run with: pytest -m slow tests/test_desk_transfer.py
"""

from dataclasses import replace

import numpy as np
import pytest

from src.dataset import DatasetReader, generate_dataset
from src.encoder import EncoderConfig
from src.objectives import LossWeights
from src.optics import CALIB_COUNTS
from src.pretrain import TrainConfig, pretrain
from src.transfer import AblationConfig, ablation_sweep, run_scratch_transfer, run_transfer

pytestmark = pytest.mark.slow

TRAIN_SENSORS = 8
TRAIN_CONTACTS = 600
HELD_OUT_SENSORS = 4
HELD_OUT_CONTACTS = 200
HEAD_EPOCHS = 20
CHANCE = 1 / 6

BUDGET = TrainConfig(epochs=8, batch_contacts=16, lr=3e-4, seed=0, weights=LossWeights(tau=0.07))


def desk_encoder(calib_mode: str) -> EncoderConfig:
    return EncoderConfig(
        image_size=64, patch_size=8, embed_dim=128, depth=4, num_heads=4,
        calib_count=CALIB_COUNTS[calib_mode],
    )


def inter_sensor(matrix) -> float:
    """Head trained on the first held-out sensor, scored on the others."""
    return float(np.mean(matrix.scores[0, 1:]))


@pytest.fixture(scope="module")
def train_reader(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk-train")
    generate_dataset(TRAIN_SENSORS, TRAIN_CONTACTS, seed=11, out_dir=root, calib_mode="k18", threads=4)
    return DatasetReader(root)


@pytest.fixture(scope="module")
def held_out_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk-held-out")
    generate_dataset(
        HELD_OUT_SENSORS, HELD_OUT_CONTACTS, seed=12, out_dir=root, calib_mode="k18",
        sensor_offset=TRAIN_SENSORS, threads=4,
    )
    return root


@pytest.fixture(scope="module")
def held_out_reader(held_out_root, train_reader):
    return DatasetReader(held_out_root, stats=train_reader.stats)


@pytest.fixture(scope="module")
def k18_matrix(train_reader, held_out_reader):
    result = pretrain(train_reader, desk_encoder("k18"), BUDGET)
    return run_transfer("classification", result.state, held_out_reader, HEAD_EPOCHS, seed=0,
                        calib_mode="k18", threads=4)


class TestDeskTransfer:
    def test_held_out_sensors_are_new(self, train_reader, held_out_reader):
        assert not set(train_reader.manifest.sensor_ids) & set(held_out_reader.manifest.sensor_ids)

    def test_beats_chance_threefold(self, k18_matrix):
        assert inter_sensor(k18_matrix) >= 3 * CHANCE

    def test_beats_scratch_encoder(self, k18_matrix, held_out_reader):
        scratch = run_scratch_transfer(
            "classification", desk_encoder("k18"), held_out_reader, HEAD_EPOCHS, seed=0,
            calib_mode="k18", threads=4, sensor_ids=held_out_reader.manifest.sensor_ids,
        )
        assert inter_sensor(k18_matrix) > inter_sensor(scratch)


class TestAblationDirection:
    def test_calibration_helps(self, k18_matrix, train_reader, held_out_reader):
        result = pretrain(train_reader, desk_encoder("k0"), replace(BUDGET, calib_mode="k0"))
        k0 = run_transfer("classification", result.state, held_out_reader, HEAD_EPOCHS, seed=0,
                          calib_mode="k0", threads=4)
        assert inter_sensor(k18_matrix) >= inter_sensor(k0)

    def test_combined_losses_strongest(self, train_reader, held_out_root, tmp_path):
        config = AblationConfig(train=BUDGET, head_epochs=HEAD_EPOCHS, threads=4)
        rows = {r["value"]: r["transfer"] for r in ablation_sweep(
            "loss", train_reader, config, eval_root=held_out_root, out_dir=tmp_path,
        )}
        assert rows["both"] >= max(rows["normal_only"], rows["scl_only"]) - 0.02
        assert (tmp_path / "loss_both" / "transfer_matrix.csv").is_file()
