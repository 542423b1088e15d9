"""Sensor-aligned dataset store — generation, manifest, integrity, reading, batching.

Directory layout under the dataset root:

  manifest.json                          single source of truth
  sensors/<sensor_id>/config.json        SensorConfig
  sensors/<sensor_id>/background.png     no-contact render
  sensors/<sensor_id>/calib_XX.png       calibration presses, stacking order
  contacts/<contact_id>/contact.json     ContactScene + labels
  samples/<sensor_id>/<contact_id>.png   tactile image
  samples/<sensor_id>/<contact_id>.tnsr  ground-truth normal map (float32)

Every contact is rendered under every sensor. Ground-truth geometry is laid
out on one canonical gel pad shared by the whole dataset, so the normal maps
of a contact are bitwise identical across sensors; each sensor still images
the press with its own gel stiffness, lights and camera.
"""

from __future__ import annotations

import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import tnsr
from .errors import ConfigError, ContractError, ManifestError, StoreError
from .encoder import stack_calibration
from .exporters import read_json, read_png, to_json, to_uint8, write_png
from .indenters import PARAM_NAMES, PRIMITIVES, Primitive
from .optics import (
    CALIB_COUNTS,
    CALIB_MODES,
    CalibrationDescriptor,
    CalibrationSet,
    ContactScene,
    SensorConfig,
    TactileImage,
    canonical_gel,
    imprint,
    make_calibration_set,
    normal_from_height,
    render_background,
    render_contact,
    sample_sensor_config,
    sample_sensor_family,
    select_calibration,
)
from .preprocess import Stats, StatsAccumulator, augment, normalize, resize

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"
LAYOUTS = ("random", "family")
SPLITS = ("train", "test")
TEST_FRACTION = 0.2

DEFAULT_GEL_AREA_CM2 = 4.0

# Contact sampling ranges (mm / degrees)
PRESS_DEPTH_RANGE_MM = (0.3, 1.5)
PLACEMENT_FRACTION = 0.3  # |x|, |y| ≤ 0.3·width keeps the press on the pad
TILT_RANGE_DEG = (-25.0, 25.0)
SIZE_RANGES_MM: dict[str, tuple[tuple[float, float], ...]] = {
    "sphere": ((1.0, 4.0),),
    "cube_corner": ((2.0, 5.0),),
    "cylinder": ((1.0, 3.0),),
    "cone": ((1.5, 3.0), (2.0, 5.0)),
    "capsule": ((0.8, 2.0), (2.0, 6.0)),
    "torus_arc": ((2.0, 4.0), (0.5, 1.2)),
}


# --- Manifest ---

@dataclass
class SensorEntry:
    sensor_id: str
    config: SensorConfig
    background_path: str
    calibration_paths: list[str] = field(default_factory=list)
    calibration_descriptors: list[CalibrationDescriptor] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "sensor_id": self.sensor_id,
            "config": self.config.to_dict(),
            "background_path": self.background_path,
            "calibration_paths": list(self.calibration_paths),
            "calibration_descriptors": [d.to_dict() for d in self.calibration_descriptors],
        }

    @classmethod
    def from_dict(cls, d: dict) -> SensorEntry:
        return cls(
            sensor_id=d["sensor_id"],
            config=SensorConfig.from_dict(d["config"]),
            background_path=d["background_path"],
            calibration_paths=list(d.get("calibration_paths", [])),
            calibration_descriptors=[
                CalibrationDescriptor.from_dict(x) for x in d.get("calibration_descriptors", [])
            ],
        )


@dataclass
class ContactEntry:
    """One contact geometry plus its task labels.

    `pose_mm` is (x, y, depth) of the press; two presses of one indenter give
    a pose-regression pair whose target is the difference of their poses.
    """

    scene: ContactScene
    class_label: int | None
    class_name: str | None = None
    indenter_id: str | None = None
    pose_mm: tuple[float, float, float] | None = None
    split: str = "train"

    @property
    def contact_id(self) -> str:
        return self.scene.contact_id

    def to_dict(self) -> dict:
        scene = self.scene
        return {
            "contact_id": scene.contact_id,
            "primitive": scene.primitive.kind,
            "params": scene.primitive.to_dict()["params"],
            "rotation_deg": list(scene.rotation_deg),
            "translation_mm": list(scene.translation_mm),
            "press_depth_mm": scene.press_depth_mm,
            "class_label": self.class_label,
            "class_name": self.class_name,
            "indenter_id": self.indenter_id,
            "pose_mm": list(self.pose_mm) if self.pose_mm is not None else None,
            "split": self.split,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ContactEntry:
        scene = ContactScene.from_dict({
            "contact_id": d["contact_id"],
            "primitive": {"kind": d["primitive"], "params": d["params"]},
            "rotation_deg": d["rotation_deg"],
            "translation_mm": d["translation_mm"],
            "press_depth_mm": d["press_depth_mm"],
        })
        pose = d.get("pose_mm")
        return cls(
            scene=scene,
            class_label=d.get("class_label"),
            class_name=d.get("class_name"),
            indenter_id=d.get("indenter_id"),
            pose_mm=tuple(float(v) for v in pose) if pose is not None else None,
            split=d.get("split", "train"),
        )


@dataclass(frozen=True)
class SampleEntry:
    sensor_id: str
    contact_id: str
    image_path: str
    normal_path: str

    def to_dict(self) -> dict:
        return {
            "sensor_id": self.sensor_id,
            "contact_id": self.contact_id,
            "image_path": self.image_path,
            "normal_path": self.normal_path,
        }

    @classmethod
    def from_dict(cls, d: dict) -> SampleEntry:
        return cls(d["sensor_id"], d["contact_id"], d["image_path"], d["normal_path"])


@dataclass
class DatasetManifest:
    global_seed: int
    calib_mode: str
    resolution: int
    sensing_area_cm2: float
    classes: list[str]
    sensors: list[SensorEntry]
    contacts: list[ContactEntry]
    samples: list[SampleEntry]
    stats: Stats | None = None
    sensor_aligned: bool = True
    version: int = MANIFEST_VERSION

    def __post_init__(self):
        self._sensor_index = {s.sensor_id: i for i, s in enumerate(self.sensors)}
        self._contact_index = {c.contact_id: i for i, c in enumerate(self.contacts)}
        self._samples = {(s.sensor_id, s.contact_id): s for s in self.samples}

    # Lookup

    @property
    def sensor_ids(self) -> list[str]:
        return [s.sensor_id for s in self.sensors]

    @property
    def contact_ids(self) -> list[str]:
        return [c.contact_id for c in self.contacts]

    def sensor(self, sensor_id: str) -> SensorEntry:
        try:
            return self.sensors[self._sensor_index[sensor_id]]
        except KeyError:
            raise ContractError(f"sensor {sensor_id!r} is not in the manifest") from None

    def contact(self, contact_id: str) -> ContactEntry:
        try:
            return self.contacts[self._contact_index[contact_id]]
        except KeyError:
            raise ContractError(f"contact {contact_id!r} is not in the manifest") from None

    def sensor_index(self, sensor_id: str) -> int:
        self.sensor(sensor_id)
        return self._sensor_index[sensor_id]

    def contact_index(self, contact_id: str) -> int:
        self.contact(contact_id)
        return self._contact_index[contact_id]

    def sample(self, sensor_id: str, contact_id: str) -> SampleEntry:
        try:
            return self._samples[(sensor_id, contact_id)]
        except KeyError:
            raise ContractError(f"no sample for sensor {sensor_id} × contact {contact_id}") from None

    def contacts_in(self, split: str | None = None) -> list[str]:
        """Contact ids of one split (all contacts when split is None), manifest order."""
        if split is not None and split not in SPLITS:
            raise ConfigError(f"Unknown split {split!r} — use one of {', '.join(SPLITS)}")
        return [c.contact_id for c in self.contacts if split is None or c.split == split]

    def is_aligned(self) -> bool:
        """True when every contact appears under every sensor."""
        return len(self._samples) == len(self.sensors) * len(self.contacts) and all(
            (s, c) in self._samples for s in self.sensor_ids for c in self.contact_ids
        )

    def has_labels(self, task: str) -> bool:
        if task == "classification":
            return bool(self.contacts) and all(c.class_label is not None for c in self.contacts)
        if task == "pose":
            return bool(self.contacts) and all(
                c.pose_mm is not None and c.indenter_id is not None for c in self.contacts
            )
        raise ConfigError(f"Unknown task {task!r} — use classification or pose")

    def restrict(
        self,
        sensor_ids: Iterable[str] | None = None,
        contacts_per_sensor: int | None = None,
    ) -> DatasetManifest:
        """A manifest view over a subset of sensors and/or the first N contacts."""
        keep_s = list(sensor_ids) if sensor_ids is not None else self.sensor_ids
        for sid in keep_s:
            self.sensor(sid)
        contacts = self.contacts if contacts_per_sensor is None else self.contacts[:contacts_per_sensor]
        keep_c = {c.contact_id for c in contacts}
        wanted = set(keep_s)
        return DatasetManifest(
            global_seed=self.global_seed,
            calib_mode=self.calib_mode,
            resolution=self.resolution,
            sensing_area_cm2=self.sensing_area_cm2,
            classes=list(self.classes),
            sensors=[self.sensor(s) for s in keep_s],
            contacts=list(contacts),
            samples=[s for s in self.samples if s.sensor_id in wanted and s.contact_id in keep_c],
            stats=self.stats,
            sensor_aligned=self.sensor_aligned,
            version=self.version,
        )

    # Serialization

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "global_seed": self.global_seed,
            "calib_mode": self.calib_mode,
            "resolution": self.resolution,
            "sensing_area_cm2": self.sensing_area_cm2,
            "classes": list(self.classes),
            "sensor_aligned": self.sensor_aligned,
            "sensors": [s.to_dict() for s in self.sensors],
            "contacts": [c.to_dict() for c in self.contacts],
            "samples": [s.to_dict() for s in self.samples],
            "stats": self.stats.to_dict() if self.stats is not None else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> DatasetManifest:
        try:
            if d.get("version") != MANIFEST_VERSION:
                raise ManifestError(
                    f"manifest version {d.get('version')} unsupported (expected {MANIFEST_VERSION})"
                )
            return cls(
                global_seed=int(d["global_seed"]),
                calib_mode=d["calib_mode"],
                resolution=int(d["resolution"]),
                sensing_area_cm2=float(d["sensing_area_cm2"]),
                classes=list(d.get("classes", [])),
                sensors=[SensorEntry.from_dict(s) for s in d["sensors"]],
                contacts=[ContactEntry.from_dict(c) for c in d["contacts"]],
                samples=[SampleEntry.from_dict(s) for s in d["samples"]],
                stats=Stats.from_dict(d["stats"]) if d.get("stats") else None,
                sensor_aligned=bool(d.get("sensor_aligned", False)),
                version=int(d["version"]),
            )
        except (KeyError, TypeError) as e:
            raise ManifestError(f"manifest is missing or mistypes field {e}") from None
        except ConfigError as e:
            raise ManifestError(f"manifest holds an invalid entry: {e}") from None

    def save(self, root: str | Path) -> Path:
        path = Path(root) / MANIFEST_NAME
        to_json(self.to_dict(), path)
        return path

    @classmethod
    def load(cls, root: str | Path) -> DatasetManifest:
        path = Path(root) / MANIFEST_NAME
        if not path.exists():
            raise StoreError(f"No dataset at {root} — {MANIFEST_NAME} not found (run `sitr gen` first)")
        return cls.from_dict(read_json(path))


# --- Integrity ---

def find_problems(manifest: DatasetManifest, root: str | Path) -> list[str]:
    """Referential-integrity check: every path exists, every id referenced is declared."""
    root = Path(root)
    problems: list[str] = []

    def seen_twice(ids: list[str], kind: str) -> None:
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            problems.append(f"duplicate {kind} ids: {', '.join(dupes)}")

    seen_twice(manifest.sensor_ids, "sensor")
    seen_twice(manifest.contact_ids, "contact")

    if manifest.calib_mode not in CALIB_MODES:
        problems.append(f"unknown calib_mode {manifest.calib_mode!r}")
    expected_k = CALIB_COUNTS.get(manifest.calib_mode)

    for s in manifest.sensors:
        if not (root / s.background_path).is_file():
            problems.append(f"sensor {s.sensor_id}: missing background {s.background_path}")
        if expected_k is not None and len(s.calibration_paths) != expected_k:
            problems.append(
                f"sensor {s.sensor_id}: {len(s.calibration_paths)} calibration images, "
                f"mode {manifest.calib_mode} needs {expected_k}"
            )
        if len(s.calibration_descriptors) != len(s.calibration_paths):
            problems.append(f"sensor {s.sensor_id}: calibration paths and descriptors differ in length")
        for p in s.calibration_paths:
            if not (root / p).is_file():
                problems.append(f"sensor {s.sensor_id}: missing calibration image {p}")

    sensors = set(manifest.sensor_ids)
    contacts = set(manifest.contact_ids)
    pairs: set[tuple[str, str]] = set()
    for sample in manifest.samples:
        key = (sample.sensor_id, sample.contact_id)
        if sample.sensor_id not in sensors:
            problems.append(f"sample references undeclared sensor {sample.sensor_id}")
        if sample.contact_id not in contacts:
            problems.append(f"sample references undeclared contact {sample.contact_id}")
        if key in pairs:
            problems.append(f"sample {sample.sensor_id}/{sample.contact_id} listed twice")
        pairs.add(key)
        for p in (sample.image_path, sample.normal_path):
            if not (root / p).is_file():
                problems.append(f"sample {sample.sensor_id}/{sample.contact_id}: missing {p}")

    if manifest.sensor_aligned and not manifest.is_aligned():
        problems.append("manifest is flagged sensor-aligned but some (sensor, contact) pairs are missing")
    if manifest.stats is None:
        problems.append("manifest has no normalization stats")
    return problems


def verify_manifest(manifest: DatasetManifest, root: str | Path) -> None:
    """Raise ManifestError listing the first problems found."""
    problems = find_problems(manifest, root)
    if problems:
        shown = "; ".join(problems[:5])
        more = f" (+{len(problems) - 5} more)" if len(problems) > 5 else ""
        raise ManifestError(f"Dataset {root} failed integrity check: {shown}{more}")


# --- Generation ---

def _rel(*parts: str) -> str:
    return "/".join(parts)


def sample_contacts(
    n_contacts: int,
    seed: int,
    classes: list[str],
    width_mm: float,
    presses_per_indenter: int = 1,
) -> list[ContactEntry]:
    """Draw contacts in indenter groups; class = indenter primitive, balanced round-robin."""
    entries = []
    n_indenters = math.ceil(n_contacts / presses_per_indenter)
    for j in range(n_indenters):
        kind = classes[j % len(classes)]
        rng = np.random.default_rng([seed, 7, j])
        params = tuple(float(rng.uniform(lo, hi)) for lo, hi in SIZE_RANGES_MM[kind])
        rotation = (
            float(rng.uniform(*TILT_RANGE_DEG)),
            float(rng.uniform(*TILT_RANGE_DEG)),
            float(rng.uniform(0.0, 360.0)),
        )
        primitive = Primitive(kind, params)
        for k in range(presses_per_indenter):
            i = j * presses_per_indenter + k
            if i >= n_contacts:
                break
            press = np.random.default_rng([seed, 11, i])
            limit = PLACEMENT_FRACTION * width_mm
            x, y = (float(v) for v in press.uniform(-limit, limit, size=2))
            depth = float(press.uniform(*PRESS_DEPTH_RANGE_MM))
            scene = ContactScene(f"c{i:05d}", primitive, rotation, (x, y), depth)
            entries.append(ContactEntry(
                scene=scene,
                class_label=classes.index(kind),
                class_name=kind,
                indenter_id=f"ind{j:04d}",
                pose_mm=(x, y, depth),
            ))

    # presses of one indenter share a split so pose pairs stay whole
    groups: dict[str, list[ContactEntry]] = {}
    for entry in entries:
        groups.setdefault(entry.indenter_id, []).append(entry)
    units = list(groups.values()) if len(groups) >= 2 else [[e] for e in entries]
    n_test = max(1, round(TEST_FRACTION * len(units))) if len(units) >= 2 else 0
    order = np.random.default_rng([seed, 13]).permutation(len(units))
    for idx in order[:n_test]:
        for entry in units[int(idx)]:
            entry.split = "test"
    return entries


def sample_sensors(
    n_sensors: int, seed: int, resolution: int, layout: str = "random", sensor_offset: int = 0
) -> list[SensorConfig]:
    if layout not in LAYOUTS:
        raise ConfigError(f"Unknown sensor layout {layout!r} — use one of {', '.join(LAYOUTS)}")
    if layout == "random":
        return [sample_sensor_config(seed, sensor_offset + i, resolution) for i in range(n_sensors)]
    base = sample_sensor_config(seed, sensor_offset, resolution)
    return [sample_sensor_family(base, seed, i) for i in range(n_sensors)]


def _quantized(values: np.ndarray) -> np.ndarray:
    """What a reader gets back after the 8-bit PNG roundtrip."""
    return to_uint8(values).astype(np.float32) / np.float32(255.0)


def _write_sensor(root: Path, cfg: SensorConfig, gel: SensorConfig, calib_mode: str, seed: int) -> SensorEntry:
    base = _rel("sensors", cfg.sensor_id)
    to_json(cfg.to_dict(), root / base / "config.json")
    calib = make_calibration_set(cfg, calib_mode, seed, gel)
    write_png(root / base / "background.png", calib.background.values)
    paths = []
    for k, image in enumerate(calib.images):
        rel = _rel(base, f"calib_{k:02d}.png")
        write_png(root / rel, image.values)
        paths.append(rel)
    logger.info("sensor %s: background + %d calibration images", cfg.sensor_id, calib.k)
    return SensorEntry(cfg.sensor_id, cfg, _rel(base, "background.png"), paths, calib.descriptors)


def _write_sample(
    root: Path, cfg: SensorConfig, gel: SensorConfig, contact: ContactEntry, normal: np.ndarray
) -> tuple[SampleEntry, StatsAccumulator | None]:
    image, _, _ = render_contact(contact.scene, cfg, gel)
    base = _rel("samples", cfg.sensor_id, contact.contact_id)
    write_png(root / f"{base}.png", image.values)
    tnsr.write(root / f"{base}.tnsr", normal)
    acc = None
    if contact.split == "train":
        acc = StatsAccumulator()
        background = render_background(cfg, gel)
        acc.add(_quantized(image.values) - _quantized(background.values))
    return SampleEntry(cfg.sensor_id, contact.contact_id, f"{base}.png", f"{base}.tnsr"), acc


def generate_dataset(
    n_sensors: int,
    n_contacts: int,
    seed: int,
    out_dir: str | Path,
    calib_mode: str = "k18",
    resolution: int = 64,
    classes: list[str] | None = None,
    threads: int = 1,
    layout: str = "random",
    sensor_offset: int = 0,
    gel_area_cm2: float = DEFAULT_GEL_AREA_CM2,
    presses_per_indenter: int = 1,
    sensors: list[SensorConfig] | None = None,
) -> DatasetManifest:
    """Render every contact under every sensor and write a sensor-aligned dataset.

    Output is a pure function of the arguments: each (sensor, contact) job has
    its own seed and one writer, so thread count never changes the bytes.
    """
    if n_sensors < 2 and sensors is None:
        raise ConfigError(f"--sensors must be ≥ 2 (aligned two-view batches need two sensors), got {n_sensors}")
    if n_contacts < 2:
        raise ConfigError(f"--contacts must be ≥ 2, got {n_contacts}")
    if calib_mode not in CALIB_MODES:
        raise ConfigError(f"Unknown calibration mode {calib_mode!r} — use one of {', '.join(CALIB_MODES)}")
    if presses_per_indenter < 1:
        raise ConfigError(f"presses_per_indenter must be ≥ 1, got {presses_per_indenter}")
    if threads < 1:
        raise ConfigError(f"--threads must be ≥ 1, got {threads}")
    classes = list(classes) if classes else list(PRIMITIVES)
    unknown = [c for c in classes if c not in PARAM_NAMES]
    if unknown:
        raise ConfigError(f"Unknown classes {unknown} — supported: {', '.join(PRIMITIVES)}")
    if len(set(classes)) != len(classes):
        raise ConfigError(f"Duplicate class names in {classes}")

    gel = canonical_gel(resolution, gel_area_cm2)
    if sensors is None:
        sensors = sample_sensors(n_sensors, seed, resolution, layout, sensor_offset)
    else:
        if len(sensors) < 2:
            raise ConfigError(f"need ≥ 2 sensors, got {len(sensors)}")
        sensors = list(sensors)
    ids = [cfg.sensor_id for cfg in sensors]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"Duplicate sensor ids: {sorted({i for i in ids if ids.count(i) > 1})}")
    contacts = sample_contacts(n_contacts, seed, classes, gel.width_mm, presses_per_indenter)

    root = Path(out_dir)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise StoreError(f"Cannot create dataset directory {root}: {e.strerror or e}") from None
    logger.info(
        "generating %d sensors × %d contacts (%s, %d px) into %s",
        len(sensors), len(contacts), calib_mode, resolution, root,
    )

    def contact_normal(contact: ContactEntry) -> np.ndarray:
        to_json(contact.to_dict(), root / "contacts" / contact.contact_id / "contact.json")
        return normal_from_height(imprint(contact.scene, gel)).values

    with ThreadPoolExecutor(max_workers=threads) as pool:
        normals = list(pool.map(contact_normal, contacts))
        sensor_entries = list(
            pool.map(lambda cfg: _write_sensor(root, cfg, gel, calib_mode, seed), sensors)
        )
        jobs = [
            pool.submit(_write_sample, root, cfg, gel, contact, normal)
            for cfg in sensors
            for contact, normal in zip(contacts, normals)
        ]
        results = [job.result() for job in jobs]

    acc = StatsAccumulator()
    for _, partial in results:
        if partial is not None:
            acc.merge(partial)

    manifest = DatasetManifest(
        global_seed=seed,
        calib_mode=calib_mode,
        resolution=resolution,
        sensing_area_cm2=gel_area_cm2,
        classes=classes,
        sensors=sensor_entries,
        contacts=contacts,
        samples=[entry for entry, _ in results],
        stats=acc.result(),
        sensor_aligned=True,
    )
    manifest.save(root)
    logger.info("wrote %d samples, manifest %s", len(manifest.samples), root / MANIFEST_NAME)
    return manifest


# --- Reading ---

class DatasetReader:
    """Loads images, calibration stacks and normals for one dataset root.

    Backgrounds and calibration stacks are cached; sample images are read on
    demand. Safe to share across threads.
    """

    def __init__(
        self, root: str | Path, manifest: DatasetManifest | None = None, stats: Stats | None = None
    ):
        self.root = Path(root)
        self.manifest = manifest if manifest is not None else DatasetManifest.load(self.root)
        # evaluation sets are normalized with the training set's stats
        self.stats = stats if stats is not None else self.manifest.stats
        if self.stats is None:
            raise ManifestError(f"Dataset {self.root} has no normalization stats")
        self._cache: dict[tuple, np.ndarray] = {}
        self._lock = threading.Lock()

    def _cached(self, key: tuple, load) -> np.ndarray:
        with self._lock:
            hit = self._cache.get(key)
        if hit is None:
            logger.debug("cache miss %s", key)
            hit = load()
            with self._lock:
                self._cache[key] = hit
        return hit

    def image(self, sensor_id: str, contact_id: str) -> np.ndarray:
        return read_png(self.root / self.manifest.sample(sensor_id, contact_id).image_path)

    def background(self, sensor_id: str) -> np.ndarray:
        entry = self.manifest.sensor(sensor_id)
        return self._cached(("bg", sensor_id), lambda: read_png(self.root / entry.background_path))

    def calibration(self, sensor_id: str, mode: str | None = None) -> CalibrationSet:
        """The sensor's stored calibration set, reduced to `mode` when given."""
        entry = self.manifest.sensor(sensor_id)
        images = [TactileImage(read_png(self.root / p)) for p in entry.calibration_paths]
        calib = CalibrationSet(images, entry.calibration_descriptors, TactileImage(self.background(sensor_id)))
        if mode is None or mode == self.manifest.calib_mode:
            return calib
        return select_calibration(calib, mode)

    def calib_stack(self, sensor_id: str, mode: str | None = None, size: int | None = None) -> np.ndarray:
        """Background-subtracted calibration frames channel-stacked, H×W×3K (un-normalized)."""
        size = size or self.manifest.resolution
        mode = mode or self.manifest.calib_mode

        def load() -> np.ndarray:
            calib = self.calibration(sensor_id, mode)
            bg = resize(calib.background.values, size)
            frames = [TactileImage(resize(img.values, size)) for img in calib.images]
            return stack_calibration(
                CalibrationSet(frames, calib.descriptors, TactileImage(bg)), size=size
            )

        return self._cached(("calib", sensor_id, mode, size), load)

    def signal(self, sensor_id: str, contact_id: str, size: int | None = None) -> np.ndarray:
        """Background-subtracted tactile signal at `size`² (un-normalized)."""
        size = size or self.manifest.resolution
        image = resize(self.image(sensor_id, contact_id), size)
        bg = self._cached(("bg", sensor_id, size), lambda: resize(self.background(sensor_id), size))
        return image - bg

    def normal(self, sensor_id: str, contact_id: str, size: int | None = None) -> np.ndarray:
        """Ground-truth normals; resized maps are renormalized to unit length."""
        n = tnsr.read(self.root / self.manifest.sample(sensor_id, contact_id).normal_path)
        size = size or self.manifest.resolution
        if n.shape[0] == size:
            return n
        n = resize(n, size)
        return (n / np.linalg.norm(n, axis=-1, keepdims=True)).astype(np.float32)

    def model_input(
        self,
        sensor_id: str,
        contact_id: str,
        size: int | None = None,
        calib_mode: str | None = None,
        rng: np.random.Generator | None = None,
    ) -> tuple[np.ndarray, np.ndarray]:
        """(signal, calib_stack) normalized by dataset stats, augmented when rng is given."""
        signal = self.signal(sensor_id, contact_id, size)
        stack = self.calib_stack(sensor_id, calib_mode, size)
        signal, stack = augment(signal, stack, rng)
        return normalize(signal, self.stats), normalize(stack, self.stats)


# --- Batching ---

@dataclass
class Batch:
    """Two views (distinct sensors) per contact; rows 2i and 2i+1 share a label."""

    images: np.ndarray          # B×H×W×3
    calib_stacks: np.ndarray    # B×H×W×3K
    normals: np.ndarray         # B×H×W×3
    contact_labels: np.ndarray  # B
    sensor_ids: np.ndarray      # B, manifest sensor index

    @property
    def size(self) -> int:
        return int(self.contact_labels.shape[0])


def make_aligned_batch(
    reader: DatasetReader,
    batch_contacts: list[str],
    rng: np.random.Generator,
    size: int | None = None,
    calib_mode: str | None = None,
    augment_views: bool = True,
) -> Batch:
    """Pick two distinct sensors uniformly per contact and load both views."""
    manifest = reader.manifest
    n = len(manifest.sensors)
    if n < 2:
        raise ConfigError(f"aligned batches need ≥ 2 sensors, dataset has {n}")
    if not manifest.sensor_aligned:
        raise ContractError("aligned batches need a sensor-aligned manifest")
    if not batch_contacts:
        raise ConfigError("batch needs at least one contact")

    images, stacks, normals, labels, sensors = [], [], [], [], []
    for contact_id in batch_contacts:
        label = manifest.contact_index(contact_id)
        pair = rng.choice(n, size=2, replace=False)
        for s in pair:
            sid = manifest.sensors[int(s)].sensor_id
            x, c = reader.model_input(sid, contact_id, size, calib_mode, rng if augment_views else None)
            images.append(x)
            stacks.append(c)
            normals.append(reader.normal(sid, contact_id, size))
            labels.append(label)
            sensors.append(int(s))
    return Batch(
        images=np.stack(images).astype(np.float32),
        calib_stacks=np.stack(stacks).astype(np.float32),
        normals=np.stack(normals).astype(np.float32),
        contact_labels=np.asarray(labels, dtype=np.int64),
        sensor_ids=np.asarray(sensors, dtype=np.int64),
    )
