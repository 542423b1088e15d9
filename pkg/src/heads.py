"""Task decoders on top of the frozen representation.

Both heads read the tactile output tokens as a feature map (one token per
grid cell, D channels) and run a small stride-2 conv stack over it.

ClassifierHead: map → conv 32/64/128 → global average pool → concat z_out
                → MLP [256, 128, n_classes]
PoseHead:       two maps concatenated on channels (2D) → conv 32/64/128
                → global average pool → linear 3 (Δx, Δy, Δdepth in mm)
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import numgrad as ng
from .errors import ConfigError, ShapeError
from .numgrad import Tensor

CONV_CHANNELS = (32, 64, 128)
MLP_HIDDEN = (256, 128)
KERNEL = 3
POSE_OUTPUTS = 3


@dataclass(frozen=True)
class HeadConfig:
    embed_dim: int
    n_outputs: int
    conv_channels: tuple[int, ...] = CONV_CHANNELS
    mlp_hidden: tuple[int, ...] = MLP_HIDDEN

    def __post_init__(self):
        if self.embed_dim < 1 or self.n_outputs < 1:
            raise ConfigError(f"head needs embed_dim ≥ 1 and n_outputs ≥ 1, got {self.embed_dim}/{self.n_outputs}")

    def to_dict(self) -> dict:
        return asdict(self)


def _he(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)


def token_map(tokens) -> Tensor:
    """B×N×D tokens → B×g×g×D feature map (row-major token grid)."""
    tokens = tokens if isinstance(tokens, Tensor) else Tensor(tokens)
    b, n, d = tokens.shape
    g = int(round(np.sqrt(n)))
    if g * g != n:
        raise ShapeError(f"{n} tokens do not form a square grid")
    return ng.reshape(tokens, (b, g, g, d))


class _ConvHead:
    """Shared conv trunk + dense layers; subclasses define inputs and outputs."""

    def __init__(self, config: HeadConfig, in_channels: int, dense_in: int, dense: tuple[int, ...], seed: int):
        rng = np.random.default_rng(seed)
        self.config = config
        self.params: dict[str, Tensor] = {}
        c_in = in_channels
        for i, c_out in enumerate(config.conv_channels):
            fan_in = KERNEL * KERNEL * c_in
            self._add(f"conv{i}.w", _he(rng, (KERNEL, KERNEL, c_in, c_out), fan_in))
            self._add(f"conv{i}.b", np.zeros(c_out, dtype=np.float32))
            c_in = c_out
        width = dense_in
        for i, out in enumerate(dense):
            self._add(f"fc{i}.w", _he(rng, (width, out), width))
            self._add(f"fc{i}.b", np.zeros(out, dtype=np.float32))
            width = out
        self.n_dense = len(dense)

    def _add(self, name: str, value: np.ndarray) -> None:
        t = Tensor(value, requires_grad=True)
        t.name = name
        self.params[name] = t

    def _trunk(self, fmap: Tensor) -> Tensor:
        x = fmap
        for i in range(len(self.config.conv_channels)):
            x = ng.relu(ng.conv2d(x, self.params[f"conv{i}.w"], self.params[f"conv{i}.b"], stride=2, padding=1))
        return ng.reduce_mean(x, axis=(1, 2))

    def _dense(self, x: Tensor) -> Tensor:
        for i in range(self.n_dense):
            x = ng.linear(x, self.params[f"fc{i}.w"], self.params[f"fc{i}.b"])
            if i < self.n_dense - 1:
                x = ng.relu(x)
        return x

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())


class ClassifierHead(_ConvHead):
    def __init__(self, config: HeadConfig, seed: int = 0):
        dense = (*config.mlp_hidden, config.n_outputs)
        super().__init__(config, config.embed_dim, config.conv_channels[-1] + config.embed_dim, dense, seed)

    def __call__(self, z_out, tokens) -> Tensor:
        """Logits B×n_classes from the class token and the tactile token map."""
        z = z_out if isinstance(z_out, Tensor) else Tensor(z_out)
        pooled = self._trunk(token_map(tokens))
        return self._dense(ng.concat([pooled, z], axis=1))


class PoseHead(_ConvHead):
    def __init__(self, config: HeadConfig, seed: int = 0):
        super().__init__(config, 2 * config.embed_dim, config.conv_channels[-1], (POSE_OUTPUTS,), seed)

    def __call__(self, tokens_first, tokens_second) -> Tensor:
        """Estimated pose change (B×3, mm) from the first press to the second."""
        fmap = ng.concat([token_map(tokens_first), token_map(tokens_second)], axis=-1)
        return self._dense(self._trunk(fmap))
