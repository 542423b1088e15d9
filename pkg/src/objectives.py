"""Pre-training losses: normal-map MSE, supervised contrastive loss, weighted total."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from . import numgrad as ng
from .errors import ConfigError, ContractError, ShapeError
from .numgrad import Tensor

logger = logging.getLogger(__name__)

DEFAULT_TAU = 0.07
TAU_GRID = (0.25, 0.10, 0.07, 0.03, 0.01)


@dataclass(frozen=True)
class LossWeights:
    lambda_normal: float = 1.0
    lambda_scl: float = 1.0
    tau: float = DEFAULT_TAU

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigError(f"temperature tau must be > 0, got {self.tau}")
        if self.lambda_normal < 0 or self.lambda_scl < 0:
            raise ConfigError(
                f"loss weights must be ≥ 0, got lambda_normal={self.lambda_normal} "
                f"lambda_scl={self.lambda_scl}"
            )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> LossWeights:
        return cls(**d)


@dataclass
class SclBatchView:
    """B unit-norm embeddings and their contact labels."""

    embeddings: Tensor
    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        if self.embeddings.ndim != 2 or self.embeddings.shape[0] != self.labels.shape[0]:
            raise ShapeError(
                f"SCL view: embeddings {self.embeddings.dims} vs {self.labels.shape[0]} labels"
            )


def _tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def normal_loss(pred, target) -> Tensor:
    """mean over batch, pixels and channels of (n̂ − n)²."""
    pred, target = _tensor(pred), _tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"normal_loss: prediction {pred.dims} vs target {target.dims}")
    diff = pred - target
    return ng.reduce_mean(diff * diff)


def positive_mask(labels: np.ndarray) -> np.ndarray:
    """P(i): same label, excluding the anchor itself."""
    labels = np.asarray(labels)
    same = labels[:, None] == labels[None, :]
    np.fill_diagonal(same, False)
    return same


def scl_loss(view: SclBatchView, tau: float = DEFAULT_TAU) -> Tensor:
    """Supervised contrastive loss, averaged over anchors with a non-empty positive set.

    L_i = −1/|P(i)| Σ_{p∈P(i)} [z_i·z_p/τ − log Σ_{a≠i} exp(z_i·z_a/τ)]
    """
    if not tau > 0:
        raise ConfigError(f"temperature tau must be > 0, got {tau}")
    z, labels = view.embeddings, view.labels
    b = z.shape[0]
    if b < 2:
        raise ShapeError(f"SCL needs a batch of ≥ 2 embeddings, got {b}")

    positives = positive_mask(labels)
    counts = positives.sum(axis=1)
    valid = counts > 0
    if not valid.any():
        raise ContractError("SCL batch has no anchor with a positive partner")
    if not valid.all():
        logger.debug("SCL: %d of %d anchors have no positive and are excluded", int((~valid).sum()), b)

    others = ~np.eye(b, dtype=bool)
    logits = ng.scale(z @ ng.transpose(z), 1.0 / tau)
    lse = ng.logsumexp(logits, axis=1, where=others)
    log_prob = logits - ng.reshape(lse, (b, 1))

    dtype = z.dtype
    pos_sum = ng.reduce_sum(log_prob * Tensor(positives.astype(dtype)), axis=1)
    weights = np.zeros(b, dtype=dtype)
    weights[valid] = -1.0 / (counts[valid] * valid.sum())
    return ng.reduce_sum(pos_sum * Tensor(weights))


def total_loss(l_normal, l_scl, weights: LossWeights) -> Tensor:
    """λ_normal·L_normal + λ_SCL·L_SCL."""
    return ng.scale(_tensor(l_normal), weights.lambda_normal) + ng.scale(_tensor(l_scl), weights.lambda_scl)
