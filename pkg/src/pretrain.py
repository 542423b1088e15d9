"""Encoder pre-training on sensor-aligned two-view batches.

Each step draws `batch_contacts` training contacts, renders both views through
two distinct sensors, and minimizes λ_normal·MSE(normals) + λ_SCL·SCL(embeddings)
with Adam. Training is single-threaded and fully determined by the seed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import numgrad as ng
from .dataset import DatasetReader, make_aligned_batch
from .encoder import EncoderConfig, EncoderState, forward, save_checkpoint
from .errors import ConfigError, NumericError
from .exporters import export_loss_csv
from .objectives import LossWeights, SclBatchView, normal_loss, scl_loss, total_loss

logger = logging.getLogger(__name__)

LOSS_CSV = "loss.csv"


@dataclass
class TrainConfig:
    epochs: int = 3
    batch_contacts: int = 8
    lr: float = 1e-4
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    calib_mode: str = "k18"
    samples_per_sensor: int | None = None
    augment: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"--epochs must be ≥ 1, got {self.epochs}")
        if self.batch_contacts < 1:
            raise ConfigError(f"batch_contacts must be ≥ 1, got {self.batch_contacts}")
        if not self.lr > 0:
            raise ConfigError(f"learning rate must be > 0, got {self.lr}")
        if self.samples_per_sensor is not None and self.samples_per_sensor < 1:
            raise ConfigError(f"--samples-per-sensor must be ≥ 1, got {self.samples_per_sensor}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weights"] = self.weights.to_dict()
        return d


@dataclass
class TrainResult:
    state: EncoderState
    history: list[dict]

    @property
    def initial_loss(self) -> float:
        return self.history[0]["total"] if self.history else math.nan

    @property
    def final_loss(self) -> float:
        return self.history[-1]["total"] if self.history else math.nan

    def epoch_means(self) -> list[float]:
        epochs = sorted({h["epoch"] for h in self.history})
        return [float(np.mean([h["total"] for h in self.history if h["epoch"] == e])) for e in epochs]


def pretrain(
    reader: DatasetReader,
    encoder_config: EncoderConfig,
    config: TrainConfig,
    on_step: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Train a fresh encoder; raises NumericError on the first non-finite loss."""
    manifest = reader.manifest
    if config.samples_per_sensor is not None:
        manifest = manifest.restrict(contacts_per_sensor=config.samples_per_sensor)
    contacts = [c.contact_id for c in manifest.contacts if c.split == "train"]
    if not contacts:
        raise ConfigError("no training contacts to pre-train on")

    state = EncoderState.initialize(encoder_config, config.seed)
    optimizer = ng.Adam(state.params, lr=config.lr)
    rng = np.random.default_rng([config.seed, 1])
    size = encoder_config.image_size
    history: list[dict] = []

    logger.info(
        "pre-training %d parameters on %d contacts × %d sensors for %d epochs",
        state.num_parameters(), len(contacts), len(manifest.sensors), config.epochs,
    )
    for epoch in range(config.epochs):
        order = rng.permutation(len(contacts))
        for start in range(0, len(order), config.batch_contacts):
            chunk = [contacts[int(i)] for i in order[start:start + config.batch_contacts]]
            batch = make_aligned_batch(
                reader, chunk, rng, size=size, calib_mode=config.calib_mode,
                augment_views=config.augment,
            )
            out = forward(batch.images, batch.calib_stacks if encoder_config.calib_count else None, state)
            l_normal = normal_loss(out.normals, batch.normals)
            l_scl = scl_loss(SclBatchView(out.embeddings, batch.contact_labels), config.weights.tau)
            loss = total_loss(l_normal, l_scl, config.weights)

            step = optimizer.step_count + 1
            value = loss.item()
            if not math.isfinite(value):
                raise NumericError(
                    f"non-finite loss {value} at step {step} (epoch {epoch + 1}); "
                    f"try a smaller --lr or a larger --tau",
                    step=step,
                )
            graph = ng.backward(loss)
            if step == 1:
                logger.debug("training graph: %d tensors per step", len(graph))
            optimizer.step()
            optimizer.zero_grad()

            record = {
                "step": step,
                "epoch": epoch + 1,
                "total": value,
                "normal": l_normal.item(),
                "scl": l_scl.item(),
            }
            history.append(record)
            if on_step is not None:
                on_step(record)
        logger.info(
            "epoch %d/%d mean loss %.5f",
            epoch + 1, config.epochs, np.mean([h["total"] for h in history if h["epoch"] == epoch + 1]),
        )
    state.optimizer = optimizer.state_dict()
    return TrainResult(state, history)


def save_run(result: TrainResult, reader: DatasetReader, config: TrainConfig, out: str | Path) -> Path:
    """Checkpoint (training stats, calib mode, Adam moments) plus the per-step loss CSV."""
    out = Path(out)
    save_checkpoint(
        result.state,
        out,
        stats=reader.stats,
        calib_mode=config.calib_mode,
        extra={"train": config.to_dict(), "steps": len(result.history)},
    )
    export_loss_csv(result.history, out / LOSS_CSV)
    return out
