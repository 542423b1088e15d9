"""Optical tactile-sensor simulator — contact geometry in, shaded RGB out.

Pipeline for one (sensor, contact):
1. imprint:            rigid indenter pressed into the gel → height map (mm)
                       raw depth-clamped imprint, then a stiffness-controlled blur
2. normal_from_height: central differences in physical units → unit normals
3. shade:              Blinn-Phong local shading from lights at the pad side midpoints or corners,
                       viewed by a pinhole camera above the gel

Every step is a pure function of (config, scene, seed). Path-traced rendering
is replaced by local shading: each sensor parameter (light shape, orientation,
angle, color, gel stiffness, gel specularity, camera FOV, sensing area) still
changes the image, and outputs are bitwise reproducible.

Coordinates: x along image columns, y along image rows, both in mm with the
origin at the pad center. Height z points from the gel toward the camera.
"""

from __future__ import annotations

import functools
import json
import logging
import math
import zlib
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ConfigError, ShapeError
from .indenters import PRIMITIVES, Primitive, lower_surface

logger = logging.getLogger(__name__)

# --- Sensor parameter bounds (simulated-dataset parameter table) ---

LIGHT_ANGLE_RANGE_DEG = (5.0, 30.0)
GEL_STIFFNESS_RANGE = (0.0, 1.0)
GEL_SPECULARITY_RANGE = (0.0, 1.0)
CAMERA_FOV_RANGE_DEG = (40.0, 90.0)
SENSING_AREA_RANGE_CM2 = (4.0, 16.0)
AREA_LIGHT_RADIUS_RANGE_MM = (0.5, 3.0)
LIGHT_COLOR_RANGE = (0.3, 1.0)

LIGHT_SHAPES = ("point", "area")
LIGHT_ORIENTATIONS = ("sides", "corners")

DEFAULT_RESOLUTION = 224
DEFAULT_NUM_LIGHTS = 3

# --- Shading constants ---

K_DIFFUSE = 0.8
SHININESS = 32
LIGHT_SITES = 4  # side midpoints or corners of the square pad
AREA_LIGHT_SAMPLES = 16
_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))

# --- Gel mechanics ---

MAX_PRESS_DEPTH_MM = 3.0  # gel thickness
GEL_SIGMA_BASE_PX = 6.0
GEL_SIGMA_SPAN_PX = 5.0
REFERENCE_RESOLUTION = 224  # σ constants are stated at this resolution

# --- Calibration ---

CALIB_MODES = ("k0", "k4", "k9", "k8", "k18")
CALIB_FRACTIONS = (0.25, 0.5, 0.75)
CORNER_CELLS = (0, 2, 6, 8)  # {0.25, 0.75}² within the row-major 3×3 grid
CALIB_JITTER_FRACTION = 0.05
CALIB_DEPTH_MM = 1.0
CALIB_BALL = Primitive("sphere", (2.0,))  # 4 mm diameter ball
CALIB_CUBE = Primitive("cube_corner", (4.0,))
_CALIB_OBJECTS = {"ball4mm": (CALIB_BALL, 0), "cube_corner": (CALIB_CUBE, 1)}

_MODE_LAYOUT: dict[str, tuple[tuple[str, tuple[int, ...]], ...]] = {
    "k0": (),
    "k4": (("ball4mm", CORNER_CELLS),),
    "k9": (("ball4mm", tuple(range(9))),),
    "k8": (("ball4mm", CORNER_CELLS), ("cube_corner", CORNER_CELLS)),
    "k18": (("ball4mm", tuple(range(9))), ("cube_corner", tuple(range(9)))),
}

CALIB_COUNTS = {mode: sum(len(cells) for _, cells in layout) for mode, layout in _MODE_LAYOUT.items()}


def stable_id(text: str) -> int:
    """Process-independent integer for seeding from a string id."""
    return zlib.crc32(text.encode("utf-8"))


def _check_range(name: str, value: float, bounds: tuple[float, float]) -> None:
    lo, hi = bounds
    if not (lo <= value <= hi):
        raise ConfigError(f"{name}={value} outside [{lo}, {hi}]")


# --- Domain types ---

@dataclass
class SensorConfig:
    """Optical and mechanical parameterization of one simulated sensor."""

    sensor_id: str
    num_lights: int = DEFAULT_NUM_LIGHTS
    light_shape: str = "point"
    light_radius_mm: float = 0.0  # area lights only
    light_orientation: str = "sides"
    light_angle_deg: float = 15.0
    light_colors: list[list[float]] = field(
        default_factory=lambda: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    )
    gel_stiffness: float = 0.5
    gel_specularity: float = 0.3
    camera_fov_deg: float = 70.0
    sensing_area_cm2: float = 9.0
    resolution: int = DEFAULT_RESOLUTION

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.num_lights < 1:
            raise ConfigError(f"sensor {self.sensor_id}: num_lights must be ≥ 1, got {self.num_lights}")
        if self.light_shape not in LIGHT_SHAPES:
            raise ConfigError(f"sensor {self.sensor_id}: light_shape {self.light_shape!r} not in {LIGHT_SHAPES}")
        if self.light_orientation not in LIGHT_ORIENTATIONS:
            raise ConfigError(
                f"sensor {self.sensor_id}: light_orientation {self.light_orientation!r} "
                f"not in {LIGHT_ORIENTATIONS}"
            )
        if self.light_shape == "area" and self.light_radius_mm <= 0:
            raise ConfigError(f"sensor {self.sensor_id}: area lights need light_radius_mm > 0")
        _check_range("light_angle_deg", self.light_angle_deg, LIGHT_ANGLE_RANGE_DEG)
        _check_range("gel_stiffness", self.gel_stiffness, GEL_STIFFNESS_RANGE)
        _check_range("gel_specularity", self.gel_specularity, GEL_SPECULARITY_RANGE)
        _check_range("camera_fov_deg", self.camera_fov_deg, CAMERA_FOV_RANGE_DEG)
        _check_range("sensing_area_cm2", self.sensing_area_cm2, SENSING_AREA_RANGE_CM2)
        colors = np.asarray(self.light_colors, dtype=np.float64)
        if colors.shape != (self.num_lights, 3):
            raise ConfigError(
                f"sensor {self.sensor_id}: light_colors must be {self.num_lights}×3, got {list(colors.shape)}"
            )
        if np.any(colors < 0) or np.any(colors > 1):
            raise ConfigError(f"sensor {self.sensor_id}: light colors must lie in [0, 1]")
        if self.resolution < 4:
            raise ConfigError(f"sensor {self.sensor_id}: resolution {self.resolution} too small")

    @property
    def width_mm(self) -> float:
        return math.sqrt(self.sensing_area_cm2 * 100.0)

    @property
    def pixel_pitch_mm(self) -> float:
        return self.width_mm / self.resolution

    @property
    def blur_sigma_px(self) -> float:
        base = GEL_SIGMA_BASE_PX - GEL_SIGMA_SPAN_PX * self.gel_stiffness
        return base * self.resolution / REFERENCE_RESOLUTION

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> SensorConfig:
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"Unknown sensor config keys: {sorted(unknown)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> SensorConfig:
        try:
            return cls.from_dict(json.loads(text))
        except (json.JSONDecodeError, TypeError) as e:
            raise ConfigError(f"Malformed sensor config JSON: {e}") from None


@dataclass
class ContactScene:
    """One indenter press: primitive, pose on the gel, and press depth."""

    contact_id: str
    primitive: Primitive
    rotation_deg: tuple[float, float, float] = (0.0, 0.0, 0.0)
    translation_mm: tuple[float, float] = (0.0, 0.0)
    press_depth_mm: float = 0.5

    def __post_init__(self):
        self.rotation_deg = tuple(float(a) for a in self.rotation_deg)
        self.translation_mm = tuple(float(t) for t in self.translation_mm)
        # depth 0 is the no-contact scene used for backgrounds
        if not (0.0 <= self.press_depth_mm <= MAX_PRESS_DEPTH_MM):
            raise ConfigError(
                f"contact {self.contact_id}: press_depth_mm={self.press_depth_mm} "
                f"outside [0, {MAX_PRESS_DEPTH_MM}] (gel thickness)"
            )

    def to_dict(self) -> dict:
        return {
            "contact_id": self.contact_id,
            "primitive": self.primitive.to_dict(),
            "rotation_deg": list(self.rotation_deg),
            "translation_mm": list(self.translation_mm),
            "press_depth_mm": self.press_depth_mm,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ContactScene:
        return cls(
            contact_id=d["contact_id"],
            primitive=Primitive.from_dict(d["primitive"]),
            rotation_deg=tuple(d["rotation_deg"]),
            translation_mm=tuple(d["translation_mm"]),
            press_depth_mm=float(d["press_depth_mm"]),
        )


@dataclass
class HeightMap:
    """Gel displacement toward the camera, mm, on an H×W grid."""

    values: np.ndarray
    pixel_pitch_mm: float


@dataclass
class NormalMap:
    """Per-pixel unit surface normals, H×W×3, z toward the camera."""

    values: np.ndarray


@dataclass
class TactileImage:
    """RGB sensor frame: [0,1] raw, [-1,1] once background-subtracted."""

    values: np.ndarray
    is_background_subtracted: bool = False

    def subtract(self, background: TactileImage) -> TactileImage:
        if self.values.shape != background.values.shape:
            raise ShapeError(
                f"background dims {list(background.values.shape)} vs image {list(self.values.shape)}"
            )
        return TactileImage(self.values - background.values, is_background_subtracted=True)


@dataclass(frozen=True)
class CalibrationDescriptor:
    """Which object was pressed where: grid cell index (row-major 3×3) plus jitter."""

    object: str
    grid_index: int
    position_mm: tuple[float, float]
    jitter_mm: tuple[float, float]

    def to_dict(self) -> dict:
        return {
            "object": self.object,
            "grid_index": self.grid_index,
            "position_mm": list(self.position_mm),
            "jitter_mm": list(self.jitter_mm),
        }

    @classmethod
    def from_dict(cls, d: dict) -> CalibrationDescriptor:
        return cls(d["object"], int(d["grid_index"]), tuple(d["position_mm"]), tuple(d["jitter_mm"]))


@dataclass
class CalibrationSet:
    """K known-indenter frames for one sensor plus its no-contact background."""

    images: list[TactileImage]
    descriptors: list[CalibrationDescriptor]
    background: TactileImage

    def __post_init__(self):
        if len(self.images) != len(self.descriptors):
            raise ShapeError(
                f"calibration set has {len(self.images)} images but {len(self.descriptors)} descriptors"
            )

    @property
    def k(self) -> int:
        return len(self.images)

    def subtracted(self) -> list[TactileImage]:
        return [img.subtract(self.background) for img in self.images]


# --- Geometry ---

def pixel_grid(resolution: int, pitch_mm: float) -> tuple[np.ndarray, np.ndarray]:
    """Pixel-center coordinates (xs, ys) in mm, origin at the pad center."""
    coords = (np.arange(resolution) + 0.5) * pitch_mm - resolution * pitch_mm / 2.0
    xs, ys = np.meshgrid(coords, coords)
    return xs, ys


def raw_imprint(scene: ContactScene, cfg: SensorConfig) -> HeightMap:
    """Depth-clamped rigid imprint max(0, depth − b) before any gel blur."""
    pitch = cfg.pixel_pitch_mm
    xs, ys = pixel_grid(cfg.resolution, pitch)
    heights = np.zeros_like(xs)
    if scene.press_depth_mm > 0:
        surface = lower_surface(scene.primitive, scene.rotation_deg, scene.translation_mm, xs, ys)
        touched = np.isfinite(surface)
        if touched.any():
            b = surface - surface[touched].min()
            heights = np.where(touched, np.maximum(0.0, scene.press_depth_mm - b), 0.0)
    return HeightMap(heights, pitch)


def imprint(scene: ContactScene, cfg: SensorConfig) -> HeightMap:
    """Raw imprint smoothed by the gel: σ_px = (6 − 5·stiffness)·H/224."""
    raw = raw_imprint(scene, cfg)
    if not raw.values.any():
        return raw
    smoothed = gaussian_filter(raw.values, cfg.blur_sigma_px, mode="constant", cval=0.0)
    return HeightMap(np.clip(smoothed, 0.0, raw.values.max()), raw.pixel_pitch_mm)


def normal_from_height(h: HeightMap) -> NormalMap:
    """n ∝ (−∂h/∂x, −∂h/∂y, 1); central differences inside, one-sided at borders."""
    if h.pixel_pitch_mm <= 0:
        raise ConfigError(f"pixel_pitch_mm must be > 0, got {h.pixel_pitch_mm}")
    dh_dy, dh_dx = np.gradient(h.values, h.pixel_pitch_mm)
    n = np.stack([-dh_dx, -dh_dy, np.ones_like(dh_dx)], axis=-1)
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    return NormalMap(n.astype(np.float32))


# --- Shading ---

def light_positions(cfg: SensorConfig) -> np.ndarray:
    """(num_lights, J, 3) sample positions in mm; J = 1 for point lights.

    Lights sit only on the four side midpoints ("sides") or the four corners
    ("corners") of the square pad, spread as evenly as the sites allow, and are
    raised so their elevation seen from the pad center is light_angle_deg.
    Past four lights the sites are reused in order.
    """
    half = cfg.width_mm / 2.0
    if cfg.light_orientation == "sides":
        start, reach = 90.0, half
    else:
        start, reach = 45.0, half * math.sqrt(2.0)
    height = reach * math.tan(math.radians(cfg.light_angle_deg))
    samples = AREA_LIGHT_SAMPLES if cfg.light_shape == "area" else 1
    n = cfg.num_lights
    out = np.zeros((n, samples, 3))
    for light in range(n):
        site = light % LIGHT_SITES if n > LIGHT_SITES else (LIGHT_SITES * light) // n
        az = math.radians(start + 90.0 * site)
        c, s = math.cos(az), math.sin(az)
        center = np.array([reach * c, reach * s, height])
        if samples == 1:
            out[light, 0] = center
            continue
        tangent = np.array([-s, c, 0.0])
        up = np.array([0.0, 0.0, 1.0])
        for k in range(samples):
            r = cfg.light_radius_mm * math.sqrt((k + 0.5) / samples)
            theta = k * _GOLDEN_ANGLE
            out[light, k] = center + r * math.cos(theta) * tangent + r * math.sin(theta) * up
    return out


def camera_height_mm(cfg: SensorConfig) -> float:
    return (cfg.width_mm / 2.0) / math.tan(math.radians(cfg.camera_fov_deg) / 2.0)


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def light_response(h: HeightMap, n: NormalMap, cfg: SensorConfig) -> np.ndarray:
    """Per-light scalar response S_l (num_lights, H, W) before coloring."""
    if h.values.shape != n.values.shape[:2]:
        raise ShapeError(f"height {list(h.values.shape)} and normal {list(n.values.shape)} differ")
    res = h.values.shape[0]
    xs, ys = pixel_grid(res, h.pixel_pitch_mm)
    points = np.stack([xs, ys, h.values], axis=-1)
    normals = n.values.astype(np.float64)
    view = _unit(np.array([0.0, 0.0, camera_height_mm(cfg)]) - points)

    lights = light_positions(cfg)
    response = np.zeros((cfg.num_lights,) + h.values.shape)
    for light in range(cfg.num_lights):
        for pos in lights[light]:
            omega = _unit(pos - points)
            diffuse = np.maximum(0.0, np.einsum("hwc,hwc->hw", normals, omega))
            halfway = _unit(omega + view)
            spec = np.maximum(0.0, np.einsum("hwc,hwc->hw", normals, halfway)) ** SHININESS
            response[light] += K_DIFFUSE * diffuse + cfg.gel_specularity * spec
        response[light] /= len(lights[light])
    return response


def shade(h: HeightMap, n: NormalMap, cfg: SensorConfig) -> TactileImage:
    """I_c = Σ_l color_{l,c}·[k_d·max(0, n·ω_l) + k_s·max(0, n·half)^α], clamped to [0,1]."""
    response = light_response(h, n, cfg)
    colors = np.asarray(cfg.light_colors, dtype=np.float64)
    rgb = np.einsum("lhw,lc->hwc", response, colors)
    return TactileImage(np.clip(rgb, 0.0, 1.0).astype(np.float32))


BACKGROUND_CACHE_SIZE = 64  # sensor configurations kept


@functools.lru_cache(maxsize=BACKGROUND_CACHE_SIZE)
def _background_values(key: str) -> np.ndarray:
    cfg_dict, area_cm2, resolution = json.loads(key)
    cfg = SensorConfig.from_dict(cfg_dict)
    pitch = math.sqrt(area_cm2 * 100.0) / resolution
    flat = HeightMap(np.zeros((resolution, resolution)), pitch)
    values = shade(flat, normal_from_height(flat), cfg).values
    values.flags.writeable = False
    logger.debug("rendered background for %s", cfg.sensor_id)
    return values


def render_background(cfg: SensorConfig, gel: SensorConfig | None = None) -> TactileImage:
    """shade() of the undeformed gel, cached per sensor configuration (LRU).

    `gel` lays the pixels out on another pad (see render_contact); backgrounds
    must use the same layout as the images they are subtracted from.
    """
    geo = on_gel(cfg, gel) if gel is not None else cfg
    key = json.dumps([cfg.to_dict(), geo.sensing_area_cm2, geo.resolution], sort_keys=True)
    return TactileImage(_background_values(key).copy())


def render_contact(
    scene: ContactScene, cfg: SensorConfig, gel: SensorConfig | None = None
) -> tuple[TactileImage, HeightMap, NormalMap]:
    """imprint → normals → shade for one press on one sensor.

    With `gel`, the imprint is laid out on that pad's grid (its area and
    resolution) using this sensor's stiffness, while lights and camera keep
    this sensor's own geometry. Datasets use this so every sensor images the
    same pixel grid.
    """
    geo = on_gel(cfg, gel) if gel is not None else cfg
    h = imprint(scene, geo)
    n = normal_from_height(h)
    return shade(h, n, cfg), h, n


# --- Calibration ---

def _calibration_descriptor(cfg: SensorConfig, obj: str, cell: int, rng_seed: int) -> CalibrationDescriptor:
    width = cfg.width_mm
    fx = CALIB_FRACTIONS[cell % 3]
    fy = CALIB_FRACTIONS[cell // 3]
    code = _CALIB_OBJECTS[obj][1]
    rng = np.random.default_rng([rng_seed, stable_id(cfg.sensor_id), code, cell])
    jitter = rng.uniform(-CALIB_JITTER_FRACTION * width, CALIB_JITTER_FRACTION * width, size=2)
    anchor = ((fx - 0.5) * width, (fy - 0.5) * width)
    return CalibrationDescriptor(
        object=obj,
        grid_index=cell,
        position_mm=(anchor[0] + float(jitter[0]), anchor[1] + float(jitter[1])),
        jitter_mm=(float(jitter[0]), float(jitter[1])),
    )


def calibration_descriptors(cfg: SensorConfig, mode: str, rng_seed: int) -> list[CalibrationDescriptor]:
    """Descriptors in stacking order: ball cells row-major, then cube cells row-major."""
    if mode not in _MODE_LAYOUT:
        raise ConfigError(f"Unknown calibration mode {mode!r} — use one of {', '.join(CALIB_MODES)}")
    return [
        _calibration_descriptor(cfg, obj, cell, rng_seed)
        for obj, cells in _MODE_LAYOUT[mode]
        for cell in cells
    ]


def calibration_scene(desc: CalibrationDescriptor, sensor_id: str = "") -> ContactScene:
    primitive = _CALIB_OBJECTS[desc.object][0]
    return ContactScene(
        contact_id=f"calib-{sensor_id}-{desc.object}-{desc.grid_index}",
        primitive=primitive,
        translation_mm=desc.position_mm,
        press_depth_mm=CALIB_DEPTH_MM,
    )


def make_calibration_set(
    cfg: SensorConfig, mode: str, rng_seed: int, gel: SensorConfig | None = None
) -> CalibrationSet:
    """Render the calibration presses for `mode` (k0/k4/k9/k8/k18) on one sensor.

    Jitter is seeded per (seed, sensor, object, grid cell), so every smaller
    mode is an exact subset of k18.
    """
    geo = on_gel(cfg, gel) if gel is not None else cfg
    descriptors = calibration_descriptors(geo, mode, rng_seed)
    images = [render_contact(calibration_scene(d, cfg.sensor_id), cfg, gel)[0] for d in descriptors]
    return CalibrationSet(images, descriptors, render_background(cfg, gel))


def select_calibration(calib: CalibrationSet, mode: str) -> CalibrationSet:
    """Extract a smaller calibration mode from a richer set (e.g. k4 out of k18)."""
    if mode not in _MODE_LAYOUT:
        raise ConfigError(f"Unknown calibration mode {mode!r} — use one of {', '.join(CALIB_MODES)}")
    lookup = {(d.object, d.grid_index): i for i, d in enumerate(calib.descriptors)}
    wanted = [(obj, cell) for obj, cells in _MODE_LAYOUT[mode] for cell in cells]
    missing = [w for w in wanted if w not in lookup]
    if missing:
        raise ConfigError(
            f"calibration mode {mode} needs presses {missing} that this set (K={calib.k}) lacks"
        )
    idx = [lookup[w] for w in wanted]
    return CalibrationSet(
        [calib.images[i] for i in idx], [calib.descriptors[i] for i in idx], calib.background
    )


# --- Sampling ---

def _draw_colors(rng: np.random.Generator, num_lights: int) -> list[list[float]]:
    colors = rng.uniform(*LIGHT_COLOR_RANGE, size=(num_lights, 3))
    order = rng.permutation(3)
    for light in range(num_lights):
        dominant = order[light % 3]
        peak = colors[light].max()
        colors[light] *= 0.5
        colors[light, dominant] = peak
    return [[float(c) for c in row] for row in colors]


def sample_sensor_config(
    rng_seed: int,
    index: int,
    resolution: int = DEFAULT_RESOLUTION,
    num_lights: int = DEFAULT_NUM_LIGHTS,
    sensor_id: str | None = None,
) -> SensorConfig:
    """Draw every sensor parameter uniformly within its bounds, deterministic per (seed, index)."""
    rng = np.random.default_rng([rng_seed, index])
    shape = LIGHT_SHAPES[int(rng.integers(len(LIGHT_SHAPES)))]
    radius = float(rng.uniform(*AREA_LIGHT_RADIUS_RANGE_MM))
    return SensorConfig(
        sensor_id=sensor_id or f"sim-{index:03d}",
        num_lights=num_lights,
        light_shape=shape,
        light_radius_mm=radius if shape == "area" else 0.0,
        light_orientation=LIGHT_ORIENTATIONS[int(rng.integers(len(LIGHT_ORIENTATIONS)))],
        light_angle_deg=float(rng.uniform(*LIGHT_ANGLE_RANGE_DEG)),
        light_colors=_draw_colors(rng, num_lights),
        gel_stiffness=float(rng.uniform(*GEL_STIFFNESS_RANGE)),
        gel_specularity=float(rng.uniform(*GEL_SPECULARITY_RANGE)),
        camera_fov_deg=float(rng.uniform(*CAMERA_FOV_RANGE_DEG)),
        sensing_area_cm2=float(rng.uniform(*SENSING_AREA_RANGE_CM2)),
        resolution=resolution,
    )


def sample_sensor_family(base: SensorConfig, rng_seed: int, index: int) -> SensorConfig:
    """A sibling of `base`: same optical layout, different brightness/color and gel.

    Light colors are scaled per channel by U(0.75, 1.25) and clamped to [0, 1];
    gel stiffness and specularity are redrawn. Camera and light geometry stay.
    """
    rng = np.random.default_rng([rng_seed, stable_id(base.sensor_id), index, 1])
    colors = np.asarray(base.light_colors) * rng.uniform(0.75, 1.25, size=(base.num_lights, 3))
    return replace(
        base,
        sensor_id=f"{base.sensor_id}-v{index:02d}",
        light_colors=[[float(c) for c in row] for row in np.clip(colors, 0.0, 1.0)],
        gel_stiffness=float(rng.uniform(*GEL_STIFFNESS_RANGE)),
        gel_specularity=float(rng.uniform(*GEL_SPECULARITY_RANGE)),
    )


def canonical_gel(resolution: int, sensing_area_cm2: float, sensor_id: str = "canonical") -> SensorConfig:
    """Sensor-independent gel used for ground-truth geometry (stiffest gel, σ = 1 px at 224²)."""
    return SensorConfig(
        sensor_id=sensor_id,
        gel_stiffness=GEL_STIFFNESS_RANGE[1],
        sensing_area_cm2=sensing_area_cm2,
        resolution=resolution,
    )


def on_gel(cfg: SensorConfig, gel: SensorConfig) -> SensorConfig:
    """`cfg` with its contact geometry laid out on `gel`'s pad (area, resolution)."""
    return replace(cfg, sensing_area_cm2=gel.sensing_area_cm2, resolution=gel.resolution)


__all__ = [
    "PRIMITIVES", "SensorConfig", "ContactScene", "HeightMap", "NormalMap", "TactileImage",
    "CalibrationSet", "CalibrationDescriptor", "imprint", "raw_imprint", "normal_from_height",
    "shade", "render_background", "render_contact", "make_calibration_set", "select_calibration",
    "sample_sensor_config", "sample_sensor_family", "canonical_gel", "on_gel",
]
