"""Sensor-invariant tactile encoder — a ViT that reads calibration images.

Token sequence per sample:

  [class z] + N tactile patch tokens + N calibration patch tokens (absent when K=0)

Both patch streams are linearly projected by their own weights, share one
fixed 2D sin-cos positional table, and carry a learned stream-type embedding.
After `depth` pre-norm transformer blocks and a final layernorm:

- tactile output tokens → linear D→P²·3 → unpatchify → predicted normal map
- class output token    → linear D→128 → L2-normalized embedding

All tensors are batched, channel-last: images B×H×W×C, tokens B×L×D.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.stats import truncnorm

from . import numgrad as ng
from . import tnsr
from .errors import ConfigError, ShapeError, StoreError
from .exporters import read_json, to_json
from .numgrad import Tensor
from .optics import CALIB_COUNTS, CalibrationSet
from .preprocess import Stats

logger = logging.getLogger(__name__)

INIT_STD = 0.02
POS_TEMPERATURE = 10000.0
CHECKPOINT_VERSION = 1
CHECKPOINT_META = "checkpoint.json"
PARAM_DIR = "params"
OPTIM_DIR = "optim"


@dataclass(frozen=True)
class EncoderConfig:
    """Architecture hyper-parameters. The desk-scale default runs on a CPU."""

    image_size: int = 64
    patch_size: int = 8
    embed_dim: int = 128
    depth: int = 4
    num_heads: int = 4
    calib_count: int = 18
    channels: int = 3
    embed_out: int = 128
    mlp_ratio: int = 4

    def __post_init__(self):
        if self.image_size <= 0 or self.patch_size <= 0:
            raise ConfigError(f"image_size and patch_size must be positive, got {self.image_size}/{self.patch_size}")
        if self.image_size % self.patch_size:
            raise ConfigError(
                f"image_size {self.image_size} is not divisible by patch_size {self.patch_size}"
            )
        if self.num_heads <= 0 or self.embed_dim % self.num_heads:
            raise ConfigError(f"embed_dim {self.embed_dim} is not divisible by num_heads {self.num_heads}")
        if self.embed_dim % 4:
            raise ConfigError(f"embed_dim {self.embed_dim} must be a multiple of 4 for 2D sin-cos positions")
        if self.depth < 0 or self.calib_count < 0:
            raise ConfigError(f"depth and calib_count must be ≥ 0, got {self.depth}/{self.calib_count}")

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.grid * self.grid

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.channels

    @property
    def calib_channels(self) -> int:
        return self.calib_count * self.channels

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.num_heads

    @property
    def seq_len(self) -> int:
        return 1 + self.num_patches + (self.num_patches if self.calib_count > 0 else 0)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> EncoderConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"Unknown encoder config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def for_calib_mode(cls, mode: str, **kwargs) -> EncoderConfig:
        if mode not in CALIB_COUNTS:
            raise ConfigError(f"Unknown calibration mode {mode!r}")
        return cls(calib_count=CALIB_COUNTS[mode], **kwargs)


VIT_BASE = dict(image_size=224, patch_size=16, embed_dim=768, depth=12, num_heads=12)


def param_count(cfg: EncoderConfig) -> int:
    """Closed-form parameter count; must equal the number of scalars in EncoderState."""
    d, p2 = cfg.embed_dim, cfg.patch_size * cfg.patch_size
    hidden = cfg.mlp_ratio * d
    total = cfg.patch_dim * d + d                       # tactile projection
    if cfg.calib_count:
        total += p2 * cfg.calib_channels * d + d        # calibration projection
    total += d + 2 * d                                  # class token, stream types
    per_block = (
        4 * d                                           # two layernorms
        + d * 3 * d + 3 * d                             # qkv
        + d * d + d                                     # attention out
        + d * hidden + hidden + hidden * d + d          # MLP
    )
    total += cfg.depth * per_block
    total += 2 * d                                      # final layernorm
    total += d * p2 * 3 + p2 * 3                        # normal head
    total += d * cfg.embed_out + cfg.embed_out          # embedding head
    return total


def sincos_table(grid: int, dim: int) -> np.ndarray:
    """Fixed 2D sin-cos positions, (grid², dim): half the channels encode the row, half the column."""
    quarter = dim // 4
    omega = 1.0 / POS_TEMPERATURE ** (np.arange(quarter, dtype=np.float64) / quarter)
    rows, cols = np.meshgrid(np.arange(grid, dtype=np.float64), np.arange(grid, dtype=np.float64), indexing="ij")

    def encode_axis(pos: np.ndarray) -> np.ndarray:
        angles = pos.reshape(-1, 1) * omega.reshape(1, -1)
        return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)

    return np.concatenate([encode_axis(rows), encode_axis(cols)], axis=1).astype(np.float32)


def param_shapes(config: EncoderConfig) -> dict[str, tuple[int, ...]]:
    """Parameter name → dims, in initialization order."""
    d, p2 = config.embed_dim, config.patch_size * config.patch_size
    hidden = config.mlp_ratio * d
    shapes: dict[str, tuple[int, ...]] = {
        "tactile_proj.w": (config.patch_dim, d),
        "tactile_proj.b": (d,),
    }
    if config.calib_count:
        shapes["calib_proj.w"] = (p2 * config.calib_channels, d)
        shapes["calib_proj.b"] = (d,)
    shapes["class_token"] = (d,)
    shapes["type_embed"] = (2, d)
    for i in range(config.depth):
        shapes.update({
            f"blocks.{i}.ln1.g": (d,), f"blocks.{i}.ln1.b": (d,),
            f"blocks.{i}.attn.qkv.w": (d, 3 * d), f"blocks.{i}.attn.qkv.b": (3 * d,),
            f"blocks.{i}.attn.out.w": (d, d), f"blocks.{i}.attn.out.b": (d,),
            f"blocks.{i}.ln2.g": (d,), f"blocks.{i}.ln2.b": (d,),
            f"blocks.{i}.mlp.fc1.w": (d, hidden), f"blocks.{i}.mlp.fc1.b": (hidden,),
            f"blocks.{i}.mlp.fc2.w": (hidden, d), f"blocks.{i}.mlp.fc2.b": (d,),
        })
    shapes["final_ln.g"] = (d,)
    shapes["final_ln.b"] = (d,)
    shapes["normal_head.w"] = (d, p2 * 3)
    shapes["normal_head.b"] = (p2 * 3,)
    shapes["embed_head.w"] = (d, config.embed_out)
    shapes["embed_head.b"] = (config.embed_out,)
    return shapes


def _trunc_normal(rng: np.random.Generator, shape: tuple[int, ...], std: float = INIT_STD) -> np.ndarray:
    return truncnorm.rvs(-2.0, 2.0, scale=std, size=shape, random_state=rng).astype(np.float32)


class EncoderState:
    """Named parameter tensors, the fixed positional table and, once trained, the Adam state."""

    def __init__(
        self,
        config: EncoderConfig,
        params: dict[str, Tensor],
        pos_table: np.ndarray | None = None,
        optimizer: dict | None = None,
    ):
        self.config = config
        self.params = params
        self.pos_table = pos_table if pos_table is not None else sincos_table(config.grid, config.embed_dim)
        self.optimizer = optimizer  # Adam state_dict: step and (m, v) per parameter

    @classmethod
    def initialize(cls, config: EncoderConfig, seed: int = 0) -> EncoderState:
        """Linear weights truncated-normal(0.02), biases zero, LN gain one, class token N(0, 0.02²)."""
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in param_shapes(config).items():
            if name == "class_token":
                value = rng.normal(0.0, INIT_STD, size=shape).astype(np.float32)
            elif name.endswith(".g"):
                value = np.ones(shape, dtype=np.float32)
            elif name.endswith(".b"):
                value = np.zeros(shape, dtype=np.float32)
            else:
                value = _trunc_normal(rng, shape)
            tensor = Tensor(value, requires_grad=True)
            tensor.name = name
            params[name] = tensor
        return cls(config, params)

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def astype(self, dtype) -> EncoderState:
        """Independent copy in another dtype (float64 for gradient checks)."""
        params = {k: p.astype(dtype, requires_grad=True) for k, p in self.params.items()}
        for k, p in params.items():
            p.name = k
        return EncoderState(self.config, params, self.pos_table.astype(dtype))

    def zero_grad(self) -> None:
        ng.zero_grad(self.params.values())


# --- Patches ---

def patchify(images, patch_size: int) -> Tensor:
    """B×H×W×C → B×N×(P·P·C), patches row-major, pixels (row, col, channel) inside."""
    images = images if isinstance(images, Tensor) else Tensor(images)
    if images.ndim != 4:
        raise ShapeError(f"patchify expects B×H×W×C, got dims {images.dims}")
    b, h, w, c = images.shape
    p = patch_size
    if h % p or w % p:
        raise ShapeError(f"image {h}×{w} is not divisible into {p}×{p} patches")
    g_h, g_w = h // p, w // p
    x = ng.reshape(images, (b, g_h, p, g_w, p, c))
    x = ng.transpose(x, (0, 1, 3, 2, 4, 5))
    return ng.reshape(x, (b, g_h * g_w, p * p * c))


def unpatchify(tokens, patch_size: int, channels: int) -> Tensor:
    """Inverse of patchify for a square grid: B×N×(P·P·C) → B×H×W×C."""
    tokens = tokens if isinstance(tokens, Tensor) else Tensor(tokens)
    if tokens.ndim != 3:
        raise ShapeError(f"unpatchify expects B×N×(P²C), got dims {tokens.dims}")
    b, n, width = tokens.shape
    p = patch_size
    g = math.isqrt(n)
    if g * g != n or width != p * p * channels:
        raise ShapeError(
            f"unpatchify: {n} tokens of width {width} do not form a square grid of "
            f"{p}×{p}×{channels} patches"
        )
    x = ng.reshape(tokens, (b, g, g, p, p, channels))
    x = ng.transpose(x, (0, 1, 3, 2, 4, 5))
    return ng.reshape(x, (b, g * p, g * p, channels))


def stack_calibration(calib: CalibrationSet, size: int | None = None) -> np.ndarray:
    """Channel-concatenate the K background-subtracted frames → H×W×3K, descriptor order."""
    frames = [
        img.values if img.is_background_subtracted else img.subtract(calib.background).values
        for img in calib.images
    ]
    if not frames:
        h = size if size is not None else calib.background.values.shape[0]
        return np.zeros((h, h, 0), dtype=np.float32)
    dims = {f.shape for f in frames}
    if len(dims) != 1:
        raise ShapeError(f"calibration images have mixed dims {sorted(dims)}")
    return np.concatenate(frames, axis=-1).astype(np.float32)


# --- Forward ---

def _batched(x) -> Tensor:
    x = x if isinstance(x, Tensor) else Tensor(x)
    return ng.reshape(x, (1, *x.shape)) if x.ndim == 3 else x


def tokenize(signal, calib_stack, state: EncoderState) -> Tensor:
    """Project both streams, add positions and stream types, prepend the class token.

    Returns B×L×D with L = 1 + N + N·[K>0].
    """
    cfg = state.config
    signal = _batched(signal)
    if tuple(signal.shape[1:]) != (cfg.image_size, cfg.image_size, cfg.channels):
        raise ShapeError(
            f"signal dims {signal.dims[1:]} vs encoder {[cfg.image_size, cfg.image_size, cfg.channels]}"
        )
    b = signal.shape[0]
    dtype = state["class_token"].dtype
    pos = Tensor(state.pos_table.astype(dtype))
    types = state["type_embed"]

    x = ng.linear(patchify(signal, cfg.patch_size), state["tactile_proj.w"], state["tactile_proj.b"])
    x = x + pos + types[0]
    cls = ng.add(Tensor(np.zeros((b, 1, cfg.embed_dim), dtype=dtype)), state["class_token"])
    parts = [cls, x]

    k_given = 0 if calib_stack is None else _batched(calib_stack).shape[-1] // cfg.channels
    if k_given != cfg.calib_count:
        raise ConfigError(
            f"calibration stack holds K={k_given} images but the encoder was built for K={cfg.calib_count}"
        )
    if cfg.calib_count:
        calib = _batched(calib_stack)
        if calib.shape[0] != b or tuple(calib.shape[1:3]) != (cfg.image_size, cfg.image_size):
            raise ShapeError(f"calibration stack dims {calib.dims} vs signal {signal.dims}")
        c = ng.linear(patchify(calib, cfg.patch_size), state["calib_proj.w"], state["calib_proj.b"])
        parts.append(c + pos + types[1])
    return ng.concat(parts, axis=1)


def _attention(x: Tensor, state: EncoderState, i: int) -> Tensor:
    cfg = state.config
    b, length, d = x.shape
    heads, hd = cfg.num_heads, cfg.head_dim
    qkv = ng.linear(x, state[f"blocks.{i}.attn.qkv.w"], state[f"blocks.{i}.attn.qkv.b"])
    qkv = ng.transpose(ng.reshape(qkv, (b, length, 3, heads, hd)), (2, 0, 3, 1, 4))
    q, k, v = qkv[0], qkv[1], qkv[2]
    scores = ng.scale(q @ ng.swapaxes(k, -1, -2), 1.0 / math.sqrt(hd))
    out = ng.softmax(scores, axis=-1) @ v
    out = ng.reshape(ng.transpose(out, (0, 2, 1, 3)), (b, length, d))
    return ng.linear(out, state[f"blocks.{i}.attn.out.w"], state[f"blocks.{i}.attn.out.b"])


def _mlp(x: Tensor, state: EncoderState, i: int) -> Tensor:
    h = ng.gelu(ng.linear(x, state[f"blocks.{i}.mlp.fc1.w"], state[f"blocks.{i}.mlp.fc1.b"]))
    return ng.linear(h, state[f"blocks.{i}.mlp.fc2.w"], state[f"blocks.{i}.mlp.fc2.b"])


def encode(tokens: Tensor, state: EncoderState) -> Tensor:
    """Pre-norm transformer: x += MHSA(LN(x)); x += MLP(LN(x)); then a final LN."""
    x = tokens
    for i in range(state.config.depth):
        x = x + _attention(ng.layernorm(x, state[f"blocks.{i}.ln1.g"], state[f"blocks.{i}.ln1.b"]), state, i)
        x = x + _mlp(ng.layernorm(x, state[f"blocks.{i}.ln2.g"], state[f"blocks.{i}.ln2.b"]), state, i)
    return ng.layernorm(x, state["final_ln.g"], state["final_ln.b"])


def split_tokens(out: Tensor, config: EncoderConfig) -> tuple[Tensor, Tensor, Tensor | None]:
    """(z_out B×D, tactile tokens B×N×D, calibration tokens or None)."""
    n = config.num_patches
    z = out[:, 0]
    x = out[:, 1:1 + n]
    c = out[:, 1 + n:] if config.calib_count else None
    return z, x, c


def decode_normal(x_out: Tensor, state: EncoderState) -> Tensor:
    """Per-token linear D→P²·3 then unpatchify to B×H×W×3 (not renormalized)."""
    cfg = state.config
    if x_out.ndim != 3 or x_out.shape[1] != cfg.num_patches:
        raise ShapeError(f"decode_normal needs {cfg.num_patches} tactile tokens, got dims {x_out.dims}")
    pixels = ng.linear(x_out, state["normal_head.w"], state["normal_head.b"])
    return unpatchify(pixels, cfg.patch_size, 3)


def embed_class(z_out: Tensor, state: EncoderState) -> Tensor:
    """Linear D→128 then L2 normalization (eps 1e-8 in the denominator)."""
    return ng.l2_normalize(ng.linear(z_out, state["embed_head.w"], state["embed_head.b"]), axis=-1)


def sitr_representation(signal, calib_stack, state: EncoderState) -> tuple[Tensor, Tensor]:
    """(z_out, tactile tokens): the frozen interface downstream heads consume."""
    z, x, _ = split_tokens(encode(tokenize(signal, calib_stack, state), state), state.config)
    return z, x


@dataclass
class ForwardOutput:
    z_out: Tensor
    tokens: Tensor
    normals: Tensor
    embeddings: Tensor


def forward(signal, calib_stack, state: EncoderState) -> ForwardOutput:
    """Full pre-training forward: representation, predicted normals, embeddings."""
    z, x = sitr_representation(signal, calib_stack, state)
    return ForwardOutput(z, x, decode_normal(x, state), embed_class(z, state))


# --- Checkpoints ---

def checksum(state: EncoderState) -> str:
    """SHA-256 over parameter names and bytes, sorted by name."""
    h = hashlib.sha256()
    for name in sorted(state.params):
        h.update(name.encode())
        h.update(np.ascontiguousarray(state.params[name].data).tobytes())
    return h.hexdigest()


def save_checkpoint(
    state: EncoderState,
    path: str | Path,
    stats: Stats | None = None,
    calib_mode: str | None = None,
    extra: dict | None = None,
) -> Path:
    """Directory archive: params/<name>.tnsr per parameter + checkpoint.json sidecar.

    A trained state's Adam moments go to optim/<name>.{m,v}.tnsr.
    """
    root = Path(path)
    for name, tensor in state.params.items():
        tnsr.write(root / PARAM_DIR / f"{name}.tnsr", tensor.data.astype(np.float32))
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": state.config.to_dict(),
        "param_names": sorted(state.params),
        "stats": stats.to_dict() if stats is not None else None,
        "calib_mode": calib_mode,
        "extra": extra or {},
    }
    optimizer = state.optimizer
    if optimizer is not None:
        for name, (m, v) in optimizer["moments"].items():
            tnsr.write(root / OPTIM_DIR / f"{name}.m.tnsr", m.astype(np.float32))
            tnsr.write(root / OPTIM_DIR / f"{name}.v.tnsr", v.astype(np.float32))
        meta["optimizer"] = {"step": int(optimizer["step"]), "moment_names": sorted(optimizer["moments"])}
    to_json(meta, root / CHECKPOINT_META)
    logger.info("checkpoint: %d parameters → %s", state.num_parameters(), root)
    return root


@dataclass
class Checkpoint:
    state: EncoderState
    stats: Stats | None
    calib_mode: str | None
    extra: dict


def load_checkpoint(path: str | Path) -> Checkpoint:
    root = Path(path)
    meta_path = root / CHECKPOINT_META
    if not meta_path.is_file():
        raise StoreError(f"{root} is not a checkpoint ({CHECKPOINT_META} missing)")
    meta = read_json(meta_path)
    if meta.get("version") != CHECKPOINT_VERSION:
        raise StoreError(f"{meta_path}: checkpoint version {meta.get('version')} unsupported")
    try:
        config = EncoderConfig.from_dict(meta["config"])
    except (KeyError, TypeError) as e:
        raise StoreError(f"{meta_path}: malformed encoder config ({e})") from None
    expected = param_shapes(config)
    params = {}
    for name in meta["param_names"]:
        value = tnsr.read(root / PARAM_DIR / f"{name}.tnsr")
        if expected.get(name) != value.shape:
            raise StoreError(f"{root}: parameter {name} dims {list(value.shape)} do not fit the config")
        tensor = Tensor(value, requires_grad=True)
        tensor.name = name
        params[name] = tensor
    missing = set(expected) - set(params)
    if missing:
        raise StoreError(f"{root}: checkpoint lacks parameters {sorted(missing)}")
    stats = Stats.from_dict(meta["stats"]) if meta.get("stats") else None
    optimizer = _load_optimizer(root, meta.get("optimizer"), expected)
    state = EncoderState(config, params, optimizer=optimizer)
    return Checkpoint(state, stats, meta.get("calib_mode"), meta.get("extra", {}))


def _load_optimizer(root: Path, meta: dict | None, expected: dict[str, tuple[int, ...]]) -> dict | None:
    if meta is None:
        return None
    moments = {}
    for name in meta.get("moment_names", []):
        m = tnsr.read(root / OPTIM_DIR / f"{name}.m.tnsr")
        v = tnsr.read(root / OPTIM_DIR / f"{name}.v.tnsr")
        if expected.get(name) != m.shape or m.shape != v.shape:
            raise StoreError(
                f"{root}: Adam moments for {name} have dims {list(m.shape)}, "
                f"expected {list(expected.get(name, ()))}"
            )
        moments[name] = (m, v)
    return {"step": int(meta.get("step", 0)), "moments": moments}


def checkpoint_digest(path: str | Path) -> str:
    """SHA-256 over every file of the archive (relative path + bytes), sorted by path."""
    root = Path(path)
    if not root.is_dir():
        raise StoreError(f"{root} is not a checkpoint directory")
    h = hashlib.sha256()
    for file in sorted(p for p in root.rglob("*") if p.is_file()):
        h.update(file.relative_to(root).as_posix().encode())
        h.update(file.read_bytes())
    return h.hexdigest()
