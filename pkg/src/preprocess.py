"""Input conditioning for tactile frames.

Order applied to every training sample:
  resize (bilinear, when the source resolution differs)
  → background subtraction (isolates the contact-induced signal)
  → augmentation (training only: color jitter + Gaussian blur)
  → normalization by the simulated-dataset channel mean/std

Calibration frames go through exactly the same steps with the *same*
augmentation draw as the tactile frame they accompany — they come from the
same physical sensor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.ndimage import gaussian_filter, zoom

from .errors import ConfigError, ShapeError

# Augmentation ranges
JITTER_GAIN = (0.9, 1.1)
JITTER_OFFSET = (-0.02, 0.02)
BLUR_SIGMA_PX = (0.0, 1.0)


@dataclass(frozen=True)
class Stats:
    """Per-channel mean/std of background-subtracted training signals."""

    mean: tuple[float, float, float] = (0.0, 0.0, 0.0)
    std: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if len(self.mean) != 3 or len(self.std) != 3:
            raise ConfigError(f"stats need 3 channels, got mean {self.mean} std {self.std}")
        if any(not s > 0 for s in self.std):
            raise ConfigError(f"stats std must be > 0 on every channel, got {self.std}")

    def to_dict(self) -> dict:
        return {"mean": list(self.mean), "std": list(self.std)}

    @classmethod
    def from_dict(cls, d: dict) -> Stats:
        return cls(tuple(float(v) for v in d["mean"]), tuple(float(v) for v in d["std"]))


class StatsAccumulator:
    """Streaming per-channel mean/std in float64."""

    def __init__(self):
        self.count = 0
        self.total = np.zeros(3)
        self.total_sq = np.zeros(3)

    def add(self, signal: np.ndarray) -> None:
        flat = np.asarray(signal, dtype=np.float64).reshape(-1, 3)
        self.count += flat.shape[0]
        self.total += flat.sum(axis=0)
        self.total_sq += (flat * flat).sum(axis=0)

    def merge(self, other: StatsAccumulator) -> None:
        self.count += other.count
        self.total += other.total
        self.total_sq += other.total_sq

    def result(self) -> Stats:
        if self.count == 0:
            raise ConfigError("cannot compute dataset stats from zero images")
        mean = self.total / self.count
        var = np.maximum(self.total_sq / self.count - mean * mean, 0.0)
        std = np.sqrt(var)
        # a channel no light ever reaches has zero spread; keep it finite
        std = np.where(std > 1e-8, std, 1.0)
        return Stats(tuple(float(m) for m in mean), tuple(float(s) for s in std))


def compute_stats(signals: Iterable[np.ndarray]) -> Stats:
    acc = StatsAccumulator()
    for s in signals:
        acc.add(s)
    return acc.result()


def resize(image: np.ndarray, size: int) -> np.ndarray:
    """Bilinear resize of an H×W×C array to size×size (no-op when already there)."""
    h, w = image.shape[:2]
    if h == size and w == size:
        return image
    factors = (size / h, size / w) + (1.0,) * (image.ndim - 2)
    return zoom(image, factors, order=1, mode="nearest", grid_mode=True).astype(image.dtype)


def subtract_background(image: np.ndarray, background: np.ndarray) -> np.ndarray:
    if image.shape != background.shape:
        raise ShapeError(f"image dims {list(image.shape)} vs background {list(background.shape)}")
    return image - background


def normalize(signal: np.ndarray, stats: Stats) -> np.ndarray:
    """(signal − mean)/std per channel; channel c of any 3K-wide stack uses stats[c mod 3]."""
    channels = signal.shape[-1]
    if channels % 3:
        raise ShapeError(f"signal channel count {channels} is not a multiple of 3")
    reps = channels // 3
    mean = np.tile(np.asarray(stats.mean, dtype=signal.dtype), reps)
    std = np.tile(np.asarray(stats.std, dtype=signal.dtype), reps)
    return (signal - mean) / std


def preprocess(
    image: np.ndarray, background: np.ndarray, stats: Stats, size: int | None = None
) -> np.ndarray:
    """Normalized background-subtracted signal, resized to `size` when given."""
    if size is not None:
        image, background = resize(image, size), resize(background, size)
    return normalize(subtract_background(image, background), stats)


@dataclass(frozen=True)
class AugmentDraw:
    """One sample's augmentation: per-channel gain/offset and a blur σ in pixels."""

    gain: tuple[float, float, float] = (1.0, 1.0, 1.0)
    offset: tuple[float, float, float] = (0.0, 0.0, 0.0)
    sigma_px: float = 0.0

    @classmethod
    def sample(cls, rng: np.random.Generator) -> AugmentDraw:
        gain = rng.uniform(*JITTER_GAIN, size=3)
        offset = rng.uniform(*JITTER_OFFSET, size=3)
        sigma = rng.uniform(*BLUR_SIGMA_PX)
        return cls(tuple(float(g) for g in gain), tuple(float(o) for o in offset), float(sigma))

    def apply(self, signal: np.ndarray) -> np.ndarray:
        reps = signal.shape[-1] // 3
        gain = np.tile(np.asarray(self.gain, dtype=signal.dtype), reps)
        offset = np.tile(np.asarray(self.offset, dtype=signal.dtype), reps)
        out = signal * gain + offset
        if self.sigma_px > 0:
            sigmas = (self.sigma_px, self.sigma_px) + (0.0,) * (signal.ndim - 2)
            out = gaussian_filter(out, sigmas, mode="nearest")
        return out.astype(signal.dtype, copy=False)


def augment(
    signal: np.ndarray, calib_stack: np.ndarray | None, rng: np.random.Generator | None
) -> tuple[np.ndarray, np.ndarray | None]:
    """Color jitter + blur with one shared draw for the signal and its calibration stack.

    Every output value stays within max gain · max|input| + max |offset|.
    `rng=None` is evaluation mode: both inputs pass through untouched.
    """
    if rng is None:
        return signal, calib_stack
    draw = AugmentDraw.sample(rng)
    stack = None
    if calib_stack is not None and calib_stack.shape[-1] > 0:
        stack = draw.apply(calib_stack)
    elif calib_stack is not None:
        stack = calib_stack
    return draw.apply(signal), stack
