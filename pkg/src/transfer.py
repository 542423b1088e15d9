"""Cross-sensor transfer evaluation.

Protocol: freeze the encoder, train a task head on one sensor's training
split, evaluate it on the held-out split of every sensor. A_ij is the score of
the head trained on sensor i and evaluated on sensor j. Transfer performance
is the off-diagonal mean of A, no-transfer the diagonal mean.

Tasks:
- classification: indenter primitive class, top-1 accuracy (fraction)
- pose:           change of (x, y, depth) between two presses of the same
                  indenter, RMSE in mm
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import numgrad as ng
from . import tnsr
from .dataset import DatasetReader, DatasetManifest
from .encoder import (
    EncoderConfig,
    EncoderState,
    checksum,
    decode_normal,
    embed_class,
    sitr_representation,
)
from .errors import ConfigError, ContractError, ManifestError
from .exporters import export_embeddings_csv, export_matrix_csv, write_height_png
from .heads import ClassifierHead, HeadConfig, PoseHead
from .numgrad import Tensor
from .objectives import TAU_GRID, LossWeights
from .optics import CALIB_COUNTS
from .pretrain import TrainConfig, pretrain
from .reconstruct import reconstruct_height

logger = logging.getLogger(__name__)

TASKS = ("classification", "pose")
METRIC_KIND = {"classification": "accuracy", "pose": "rmse"}
HEAD_LR = 1e-3
HEAD_BATCH = 32
FEATURE_BATCH = 16

CALIB_AXIS = ("k0", "k4", "k9", "k8", "k18")
LOSS_AXIS = ("normal_only", "scl_only", "both")
ABLATION_AXES = ("calib", "tau", "loss")


def _check_task(task: str) -> None:
    if task not in TASKS:
        raise ConfigError(f"Unknown task {task!r} — use one of {', '.join(TASKS)}")


# --- Task data ---

@dataclass
class TaskSet:
    """Samples of one sensor plus the rows a head is trained/evaluated on.

    classification: rows index samples, targets are class ids
    pose:           rows are (first, second) sample pairs, targets p₂ − p₁ in mm
    """

    task: str
    sensor_id: str
    contact_ids: list[str]
    rows: np.ndarray
    targets: np.ndarray

    def __len__(self) -> int:
        return int(self.rows.shape[0])


def build_task_set(
    task: str,
    manifest: DatasetManifest,
    sensor_id: str,
    split: str | None = "train",
    include_self: bool = False,
) -> TaskSet:
    _check_task(task)
    if not manifest.has_labels(task):
        raise ManifestError(f"dataset has no {task} labels for every contact")
    manifest.sensor(sensor_id)
    contact_ids = manifest.contacts_in(split)
    entries = [manifest.contact(c) for c in contact_ids]
    if task == "classification":
        rows = np.arange(len(entries))
        targets = np.array([e.class_label for e in entries], dtype=np.int64)
        return TaskSet(task, sensor_id, contact_ids, rows, targets)

    pairs, deltas = [], []
    for i, a in enumerate(entries):
        for j, b in enumerate(entries):
            if a.indenter_id != b.indenter_id or (i == j and not include_self):
                continue
            pairs.append((i, j))
            deltas.append(np.subtract(b.pose_mm, a.pose_mm))
    if not pairs:
        raise ContractError(
            f"no pose pairs in the {split or 'full'} split of {sensor_id} "
            f"(generate with presses_per_indenter ≥ 2)"
        )
    return TaskSet(
        task, sensor_id, contact_ids,
        np.asarray(pairs, dtype=np.int64), np.asarray(deltas, dtype=np.float32),
    )


@dataclass
class Features:
    """Frozen representation of a list of samples."""

    z: np.ndarray       # n×D
    tokens: np.ndarray  # n×N×D


def _inputs(reader: DatasetReader, sensor_id: str, contact_ids: list[str], size: int,
            calib_mode: str | None, rng: np.random.Generator | None = None):
    xs, cs = zip(*(reader.model_input(sensor_id, c, size, calib_mode, rng) for c in contact_ids))
    return np.stack(xs), np.stack(cs)


def encode_samples(
    state: EncoderState,
    reader: DatasetReader,
    sensor_id: str,
    contact_ids: list[str],
    calib_mode: str | None = None,
    batch_size: int = FEATURE_BATCH,
) -> Features:
    """sitr_representation for each sample, computed without recording a graph."""
    size = state.config.image_size
    zs, toks = [], []
    with ng.no_grad():
        for start in range(0, len(contact_ids), batch_size):
            chunk = contact_ids[start:start + batch_size]
            x, c = _inputs(reader, sensor_id, chunk, size, calib_mode)
            z, t = sitr_representation(x, c if state.config.calib_count else None, state)
            zs.append(z.data)
            toks.append(t.data)
    d, n = state.config.embed_dim, state.config.num_patches
    if not zs:
        return Features(np.zeros((0, d), np.float32), np.zeros((0, n, d), np.float32))
    return Features(np.concatenate(zs), np.concatenate(toks))


# --- Heads ---

def make_head(task: str, embed_dim: int, n_classes: int, seed: int):
    _check_task(task)
    if task == "classification":
        return ClassifierHead(HeadConfig(embed_dim, n_classes), seed)
    return PoseHead(HeadConfig(embed_dim, 3), seed)


def _head_output(task: str, head, z: Tensor, tokens: Tensor, rows: np.ndarray) -> Tensor:
    if task == "classification":
        return head(ng.getitem(z, rows), ng.getitem(tokens, rows))
    return head(ng.getitem(tokens, rows[:, 0]), ng.getitem(tokens, rows[:, 1]))


def _task_loss(task: str, out: Tensor, targets: np.ndarray) -> Tensor:
    if task == "classification":
        return ng.cross_entropy(out, targets)
    diff = out - Tensor(targets.astype(out.dtype))
    return ng.reduce_mean(diff * diff)


def _score(task: str, out: np.ndarray, targets: np.ndarray) -> float:
    if task == "classification":
        return float(np.mean(np.argmax(out, axis=1) == targets))
    err = np.asarray(out, dtype=np.float64) - targets
    return float(np.sqrt(np.mean(np.mean(err * err, axis=1))))


@dataclass
class HeadRun:
    head: object
    history: list[float]
    train_metric: float


def fit_head(
    task_set: TaskSet,
    features: Features,
    n_classes: int,
    epochs: int,
    seed: int,
    lr: float = HEAD_LR,
    batch_size: int = HEAD_BATCH,
) -> HeadRun:
    """Train a head on precomputed frozen features."""
    if epochs < 1:
        raise ConfigError(f"head epochs must be ≥ 1, got {epochs}")
    if len(task_set) == 0:
        raise ContractError(f"no {task_set.task} training rows for sensor {task_set.sensor_id}")
    task = task_set.task
    head = make_head(task, features.z.shape[1], n_classes, seed)
    optimizer = ng.Adam(head.params, lr=lr)
    rng = np.random.default_rng([seed, 3])
    z, tokens = Tensor(features.z), Tensor(features.tokens)
    history = []
    for _ in range(epochs):
        order = rng.permutation(len(task_set))
        losses = []
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            out = _head_output(task, head, z, tokens, task_set.rows[idx])
            loss = _task_loss(task, out, task_set.targets[idx])
            ng.backward(loss)
            optimizer.step()
            optimizer.zero_grad()
            losses.append(loss.item())
        history.append(float(np.mean(losses)))
    return HeadRun(head, history, evaluate(head, task_set, features))


def evaluate(head, task_set: TaskSet, features: Features) -> float:
    """Top-1 accuracy (fraction) or RMSE (mm) of `head` on `task_set`."""
    if len(task_set) == 0:
        raise ContractError(f"empty {task_set.task} evaluation set for sensor {task_set.sensor_id}")
    with ng.no_grad():
        out = _head_output(task_set.task, head, Tensor(features.z), Tensor(features.tokens), task_set.rows)
    return _score(task_set.task, out.data, task_set.targets)


def train_head(
    task: str,
    state: EncoderState,
    reader: DatasetReader,
    sensor_id: str,
    epochs: int,
    seed: int,
    calib_mode: str | None = None,
) -> HeadRun:
    """Frozen-encoder head training on one sensor's training split."""
    task_set = build_task_set(task, reader.manifest, sensor_id, "train")
    before = checksum(state)
    features = encode_samples(state, reader, sensor_id, task_set.contact_ids, calib_mode)
    run = fit_head(task_set, features, len(reader.manifest.classes), epochs, seed)
    if checksum(state) != before:
        raise ContractError("encoder parameters changed during head training")
    return run


# --- Transfer matrix ---

@dataclass
class TransferMatrix:
    sensor_ids: list[str]
    scores: np.ndarray
    metric_kind: str

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        n = len(self.sensor_ids)
        if self.scores.shape != (n, n):
            raise ConfigError(f"transfer matrix dims {list(self.scores.shape)} vs {n} sensors")

    @property
    def units(self) -> str:
        return "mm" if self.metric_kind == "rmse" else "fraction"


@dataclass(frozen=True)
class TransferSummary:
    transfer: float
    no_transfer: float
    transfer_std: float
    no_transfer_std: float
    metric_kind: str
    n_sensors: int

    def to_dict(self) -> dict:
        return {
            "transfer": self.transfer,
            "no_transfer": self.no_transfer,
            "transfer_std": self.transfer_std,
            "no_transfer_std": self.no_transfer_std,
            "metric_kind": self.metric_kind,
            "units": "mm" if self.metric_kind == "rmse" else "fraction",
            "n_sensors": self.n_sensors,
        }


def transfer_performance(matrix: TransferMatrix) -> TransferSummary:
    """Off-diagonal mean (transfer) and diagonal mean (no-transfer), with cell stds."""
    a = matrix.scores
    n = a.shape[0]
    if n < 2:
        raise ContractError(f"transfer needs ≥ 2 sensors, matrix has {n}")
    off = a[~np.eye(n, dtype=bool)]
    diag = np.diag(a)
    if not (np.all(np.isfinite(off)) and np.all(np.isfinite(diag))):
        raise ContractError("transfer matrix has unpopulated cells")
    return TransferSummary(
        transfer=float(off.sum() / (n * (n - 1))),
        no_transfer=float(diag.sum() / n),
        transfer_std=float(off.std()),
        no_transfer_std=float(diag.std()),
        metric_kind=matrix.metric_kind,
        n_sensors=n,
    )


def pair_transfer(matrix: TransferMatrix, i: int, j: int) -> float:
    """Two-sensor score: mean of A_ij and A_ji."""
    if i == j:
        raise ConfigError("pair_transfer needs two different sensors")
    return float((matrix.scores[i, j] + matrix.scores[j, i]) / 2.0)


def _sensor_features(state, reader, sensor_ids, task, split, calib_mode, threads):
    sets = {s: build_task_set(task, reader.manifest, s, split) for s in sensor_ids}

    def one(sid):
        return sid, encode_samples(state, reader, sid, sets[sid].contact_ids, calib_mode)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        feats = dict(pool.map(one, sensor_ids))
    return sets, feats


def run_transfer(
    task: str,
    state: EncoderState,
    reader: DatasetReader,
    epochs: int,
    seed: int,
    calib_mode: str | None = None,
    threads: int = 1,
    sensor_ids: list[str] | None = None,
) -> TransferMatrix:
    """Fill the full n×n matrix with a frozen encoder; rows run in parallel."""
    _check_task(task)
    sensor_ids = sensor_ids or reader.manifest.sensor_ids
    n_classes = len(reader.manifest.classes)
    before = checksum(state)
    train_sets, train_feats = _sensor_features(state, reader, sensor_ids, task, "train", calib_mode, threads)
    test_sets, test_feats = _sensor_features(state, reader, sensor_ids, task, "test", calib_mode, threads)

    def row(i: int) -> np.ndarray:
        sid = sensor_ids[i]
        run = fit_head(train_sets[sid], train_feats[sid], n_classes, epochs, seed=hash_seed(seed, i))
        scores = np.array([evaluate(run.head, test_sets[t], test_feats[t]) for t in sensor_ids])
        logger.info("trained on %s: %s", sid, " ".join(f"{v:.4f}" for v in scores))
        return scores

    with ThreadPoolExecutor(max_workers=threads) as pool:
        rows = list(pool.map(row, range(len(sensor_ids))))
    if checksum(state) != before:
        raise ContractError("encoder parameters changed during transfer evaluation")
    return TransferMatrix(list(sensor_ids), np.stack(rows), METRIC_KIND[task])


def hash_seed(seed: int, index: int) -> int:
    """Per-cell seed, independent of scheduling order."""
    return int(np.random.default_rng([seed, index]).integers(2**31))


# --- From-scratch baseline ---

def train_scratch(
    task: str,
    encoder_config: EncoderConfig,
    reader: DatasetReader,
    sensor_id: str,
    epochs: int,
    seed: int,
    calib_mode: str | None = None,
    lr: float = 1e-4,
) -> tuple[EncoderState, HeadRun]:
    """Randomly initialized encoder trained jointly with the head on one sensor."""
    task_set = build_task_set(task, reader.manifest, sensor_id, "train")
    if len(task_set) == 0:
        raise ContractError(f"no {task} training rows for sensor {sensor_id}")
    state = EncoderState.initialize(encoder_config, seed)
    head = make_head(task, encoder_config.embed_dim, len(reader.manifest.classes), seed)
    enc_opt = ng.Adam(state.params, lr=lr)
    head_opt = ng.Adam(head.params, lr=HEAD_LR)
    rng = np.random.default_rng([seed, 5])
    size = encoder_config.image_size
    history = []
    for epoch in range(epochs):
        order = rng.permutation(len(task_set))
        losses = []
        for start in range(0, len(order), HEAD_BATCH):
            rows = task_set.rows[order[start:start + HEAD_BATCH]]
            needed = np.unique(rows)
            x, c = _inputs(reader, sensor_id, [task_set.contact_ids[i] for i in needed], size, calib_mode, rng)
            z, tokens = sitr_representation(x, c if encoder_config.calib_count else None, state)
            out = _head_output(task, head, z, tokens, np.searchsorted(needed, rows))
            loss = _task_loss(task, out, task_set.targets[order[start:start + HEAD_BATCH]])
            ng.backward(loss)
            enc_opt.step()
            head_opt.step()
            enc_opt.zero_grad()
            head_opt.zero_grad()
            losses.append(loss.item())
        history.append(float(np.mean(losses)))
        logger.info("scratch %s epoch %d/%d loss %.5f", sensor_id, epoch + 1, epochs, history[-1])
    features = encode_samples(state, reader, sensor_id, task_set.contact_ids, calib_mode)
    return state, HeadRun(head, history, evaluate(head, task_set, features))


def run_scratch_transfer(
    task: str,
    encoder_config: EncoderConfig,
    reader: DatasetReader,
    epochs: int,
    seed: int,
    calib_mode: str | None = None,
    threads: int = 1,
    sensor_ids: list[str] | None = None,
) -> TransferMatrix:
    """Transfer matrix of the from-scratch baseline under the same epoch budget."""
    _check_task(task)
    sensor_ids = sensor_ids or reader.manifest.sensor_ids
    test_sets = {s: build_task_set(task, reader.manifest, s, "test") for s in sensor_ids}

    def row(i: int) -> np.ndarray:
        sid = sensor_ids[i]
        state, run = train_scratch(
            task, encoder_config, reader, sid, epochs, hash_seed(seed, i), calib_mode
        )
        return np.array([
            evaluate(run.head, test_sets[t], encode_samples(state, reader, t, test_sets[t].contact_ids, calib_mode))
            for t in sensor_ids
        ])

    with ThreadPoolExecutor(max_workers=threads) as pool:
        rows = list(pool.map(row, range(len(sensor_ids))))
    return TransferMatrix(list(sensor_ids), np.stack(rows), METRIC_KIND[task])


# --- Embeddings and reconstructions ---

def export_embeddings(
    state: EncoderState,
    reader: DatasetReader,
    out_csv: str | Path | None = None,
    calib_mode: str | None = None,
) -> str:
    """One row per sample: sensor_id, contact_id, class label, 128 embedding values."""
    manifest = reader.manifest
    sensors, contacts, labels, embeddings = [], [], [], []
    for sid in manifest.sensor_ids:
        ids = [s.contact_id for s in manifest.samples if s.sensor_id == sid]
        feats = encode_samples(state, reader, sid, ids, calib_mode)
        with ng.no_grad():
            e = embed_class(Tensor(feats.z), state).data if ids else np.zeros((0, state.config.embed_out))
        sensors += [sid] * len(ids)
        contacts += ids
        labels += [manifest.contact(c).class_label for c in ids]
        embeddings.append(e)
    emb = np.concatenate(embeddings) if embeddings else np.zeros((0, state.config.embed_out))
    return export_embeddings_csv(sensors, contacts, labels, emb, out_csv)


def dump_reconstructions(
    state: EncoderState,
    reader: DatasetReader,
    out_dir: str | Path,
    count: int,
    calib_mode: str | None = None,
) -> list[Path]:
    """Predicted normals + integrated heights for the first `count` test samples of the first sensor."""
    out_dir = Path(out_dir)
    manifest = reader.manifest
    sid = manifest.sensor_ids[0]
    ids = manifest.contacts_in("test")[:count]
    pitch = math.sqrt(manifest.sensing_area_cm2 * 100.0) / state.config.image_size
    written = []
    for cid in ids:
        x, c = _inputs(reader, sid, [cid], state.config.image_size, calib_mode)
        with ng.no_grad():
            _, tokens = sitr_representation(x, c if state.config.calib_count else None, state)
            normals = decode_normal(tokens, state).data[0]
        height = reconstruct_height(normals, pitch)
        stem = out_dir / f"{sid}_{cid}"
        tnsr.write(f"{stem}_normal.tnsr", normals.astype(np.float32))
        tnsr.write(f"{stem}_height.tnsr", height.values.astype(np.float32))
        write_height_png(f"{stem}_height.png", height.values)
        written.append(stem)
    return written


# --- Ablation ---

@dataclass
class AblationConfig:
    """Everything an ablation cell shares; the swept axis overrides one part."""

    train: TrainConfig
    task: str = "classification"
    head_epochs: int = 10
    seed: int = 0
    threads: int = 1
    image_size: int = 64
    patch_size: int = 8
    embed_dim: int = 128
    depth: int = 4
    num_heads: int = 4

    def encoder_config(self, calib_mode: str) -> EncoderConfig:
        return EncoderConfig(
            image_size=self.image_size, patch_size=self.patch_size, embed_dim=self.embed_dim,
            depth=self.depth, num_heads=self.num_heads, calib_count=CALIB_COUNTS[calib_mode],
        )


def ablation_cells(axis: str, base: TrainConfig) -> list[tuple[str, TrainConfig]]:
    """(value label, train config) per cell of the swept axis."""
    if axis == "calib":
        return [(mode, replace(base, calib_mode=mode)) for mode in CALIB_AXIS]
    if axis == "tau":
        return [(f"{tau:.2f}", replace(base, weights=replace(base.weights, tau=tau))) for tau in TAU_GRID]
    if axis == "loss":
        w = base.weights
        return [
            ("normal_only", replace(base, weights=LossWeights(w.lambda_normal or 1.0, 0.0, w.tau))),
            ("scl_only", replace(base, weights=LossWeights(0.0, w.lambda_scl or 1.0, w.tau))),
            ("both", replace(base, weights=LossWeights(w.lambda_normal or 1.0, w.lambda_scl or 1.0, w.tau))),
        ]
    raise ConfigError(f"Unknown ablation axis {axis!r} — use one of {', '.join(ABLATION_AXES)}")


def ablation_sweep(
    axis: str,
    train_reader: DatasetReader,
    config: AblationConfig,
    eval_root: str | Path | None = None,
    out_dir: str | Path | None = None,
) -> list[dict]:
    """Pre-train + transfer-evaluate once per cell; returns one report row per cell."""
    cells = ablation_cells(axis, config.train)
    report = []
    for value, train_cfg in cells:
        logger.info("ablation %s=%s", axis, value)
        result = pretrain(train_reader, config.encoder_config(train_cfg.calib_mode), train_cfg)
        eval_reader = (
            DatasetReader(eval_root, stats=train_reader.stats) if eval_root is not None else train_reader
        )
        matrix = run_transfer(
            config.task, result.state, eval_reader, config.head_epochs, config.seed,
            train_cfg.calib_mode, config.threads,
        )
        summary = transfer_performance(matrix)
        if out_dir is not None:
            export_matrix_csv(matrix.scores, matrix.sensor_ids, Path(out_dir) / f"{axis}_{value}" / "transfer_matrix.csv")
        report.append({
            "axis": axis,
            "value": value,
            "metric_kind": summary.metric_kind,
            "transfer": summary.transfer,
            "transfer_std": summary.transfer_std,
            "no_transfer": summary.no_transfer,
            "no_transfer_std": summary.no_transfer_std,
        })
    return report
