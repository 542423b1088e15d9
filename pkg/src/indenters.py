"""Analytic indenter primitives and their lower-surface profiles.

Each primitive is a signed distance function (SDF) in its own frame, centered
on the origin. `lower_surface()` finds, for every pixel column of the gel, the
height of the first point of the rotated/translated solid seen from below —
sphere tracing straight up the z axis. The imprint module turns that profile
into a height map.

Default orientations (before the scene rotation):
- cube_corner: body diagonal vertical, so a vertex touches the gel first
- cone:        apex pointing down at the gel
- cylinder:    axis vertical, flat face down
- capsule:     axis along x, lying on its side
- torus_arc:   ring standing in the x-z plane, only its lower arc touches
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import ConfigError

# Sphere tracing: stop when the SDF drops below TRACE_TOL (mm)
TRACE_TOL = 1e-5
TRACE_MAX_STEPS = 256
# Smallest advance per step (mm) so grazing rays still terminate
TRACE_MIN_STEP = 2e-5

# Cylinder half-height as a multiple of its radius
CYLINDER_HALF_HEIGHT = 1.5

PARAM_NAMES: dict[str, tuple[str, ...]] = {
    "sphere": ("radius_mm",),
    "cube_corner": ("edge_mm",),
    "cylinder": ("radius_mm",),
    "cone": ("radius_mm", "height_mm"),
    "capsule": ("radius_mm", "length_mm"),
    "torus_arc": ("major_mm", "minor_mm"),
}

PRIMITIVES = tuple(PARAM_NAMES)


def _sdf_sphere(p: np.ndarray, radius: float) -> np.ndarray:
    return np.linalg.norm(p, axis=-1) - radius


def _sdf_box(p: np.ndarray, half: float) -> np.ndarray:
    q = np.abs(p) - half
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
    inside = np.minimum(q.max(axis=-1), 0.0)
    return outside + inside


def _sdf_cube_corner(p: np.ndarray, edge: float) -> np.ndarray:
    return _sdf_box(p, edge / 2.0)


def _sdf_cylinder(p: np.ndarray, radius: float) -> np.ndarray:
    half_h = CYLINDER_HALF_HEIGHT * radius
    d_r = np.hypot(p[..., 0], p[..., 1]) - radius
    d_z = np.abs(p[..., 2]) - half_h
    outside = np.hypot(np.maximum(d_r, 0.0), np.maximum(d_z, 0.0))
    return outside + np.minimum(np.maximum(d_r, d_z), 0.0)


def _sdf_cone(p: np.ndarray, radius: float, height: float) -> np.ndarray:
    """Apex at the origin, base disc at z = height. A lower bound on distance."""
    half_angle = np.arctan2(radius, height)
    q = np.hypot(p[..., 0], p[..., 1])
    lateral = q * np.cos(half_angle) - p[..., 2] * np.sin(half_angle)
    return np.maximum(lateral, p[..., 2] - height)


def _sdf_capsule(p: np.ndarray, radius: float, length: float) -> np.ndarray:
    x = np.clip(p[..., 0], -length / 2.0, length / 2.0)
    seg = p.copy()
    seg[..., 0] = p[..., 0] - x
    return np.linalg.norm(seg, axis=-1) - radius


def _sdf_torus(p: np.ndarray, major: float, minor: float) -> np.ndarray:
    ring = np.hypot(p[..., 0], p[..., 2]) - major
    return np.hypot(ring, p[..., 1]) - minor


_SDF: dict[str, Callable[..., np.ndarray]] = {
    "sphere": _sdf_sphere,
    "cube_corner": _sdf_cube_corner,
    "cylinder": _sdf_cylinder,
    "cone": _sdf_cone,
    "capsule": _sdf_capsule,
    "torus_arc": _sdf_torus,
}


def _corner_down() -> np.ndarray:
    diag = -np.ones(3) / np.sqrt(3.0)
    rot, _ = Rotation.align_vectors([[0.0, 0.0, -1.0]], [diag])
    return rot.as_matrix()


_DEFAULT_ORIENTATION: dict[str, np.ndarray] = {
    "sphere": np.eye(3),
    "cube_corner": _corner_down(),
    "cylinder": np.eye(3),
    "cone": np.eye(3),
    "capsule": np.eye(3),
    "torus_arc": np.eye(3),
}


@dataclass(frozen=True)
class Primitive:
    """An indenter shape: kind name plus its size parameters in mm."""

    kind: str
    params: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in PARAM_NAMES:
            raise ConfigError(
                f"Unknown primitive {self.kind!r} — supported: {', '.join(PRIMITIVES)}"
            )
        expected = PARAM_NAMES[self.kind]
        if len(self.params) != len(expected):
            raise ConfigError(
                f"Primitive {self.kind} takes {len(expected)} parameter(s) "
                f"({', '.join(expected)}), got {len(self.params)}"
            )
        if any(not np.isfinite(v) or v <= 0 for v in self.params):
            raise ConfigError(f"Primitive {self.kind} sizes must be positive mm, got {self.params}")

    @classmethod
    def parse(cls, spec: str) -> Primitive:
        """Parse 'kind:a,b' (e.g. 'sphere:2.0', 'cone:2,4')."""
        kind, _, rest = spec.partition(":")
        try:
            params = tuple(float(v) for v in rest.split(",") if v.strip())
        except ValueError:
            raise ConfigError(f"Malformed object spec {spec!r} — expected kind:value[,value]") from None
        return cls(kind.strip(), params)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(zip(PARAM_NAMES[self.kind], self.params))}

    @classmethod
    def from_dict(cls, d: dict) -> Primitive:
        kind = d["kind"]
        if kind not in PARAM_NAMES:
            raise ConfigError(f"Unknown primitive {kind!r} — supported: {', '.join(PRIMITIVES)}")
        return cls(kind, tuple(float(d["params"][n]) for n in PARAM_NAMES[kind]))

    @property
    def bound_radius(self) -> float:
        """Radius of a sphere around the local origin that contains the solid."""
        a = self.params
        if self.kind == "sphere":
            return a[0]
        if self.kind == "cube_corner":
            return a[0] * np.sqrt(3.0) / 2.0
        if self.kind == "cylinder":
            return float(np.hypot(a[0], CYLINDER_HALF_HEIGHT * a[0]))
        if self.kind == "cone":
            return float(np.hypot(a[0], a[1]))
        if self.kind == "capsule":
            return a[1] / 2.0 + a[0]
        return a[0] + a[1]

    def sdf(self, local: np.ndarray) -> np.ndarray:
        return _SDF[self.kind](local, *self.params)


def rotation_matrix(kind: str, euler_deg: tuple[float, float, float]) -> np.ndarray:
    """Local-to-world rotation: scene Euler angles after the default orientation."""
    scene = Rotation.from_euler("xyz", euler_deg, degrees=True).as_matrix()
    return scene @ _DEFAULT_ORIENTATION[kind]


def lower_surface(
    primitive: Primitive,
    euler_deg: tuple[float, float, float],
    translation_mm: tuple[float, float],
    xs: np.ndarray,
    ys: np.ndarray,
) -> np.ndarray:
    """Height (mm, relative to the primitive center) of the solid's lowest point per pixel.

    Args:
        xs, ys: Pixel-center coordinates on the gel plane, same shape.

    Returns:
        Array shaped like xs; +inf where the vertical ray misses the solid.
    """
    rot = rotation_matrix(primitive.kind, euler_deg)
    bound = primitive.bound_radius
    px = (xs - translation_mm[0]).ravel()
    py = (ys - translation_mm[1]).ravel()
    out = np.full(px.shape, np.inf)

    cand = np.nonzero(px * px + py * py <= bound * bound)[0]
    if cand.size == 0:
        return out.reshape(xs.shape)

    z = np.full(cand.shape, -bound - 0.5)
    live = np.ones(cand.shape, dtype=bool)
    hit = np.zeros(cand.shape, dtype=bool)
    top = bound + 0.5
    for _ in range(TRACE_MAX_STEPS):
        idx = np.nonzero(live)[0]
        if idx.size == 0:
            break
        pts = np.stack([px[cand[idx]], py[cand[idx]], z[idx]], axis=-1)
        d = primitive.sdf(pts @ rot)  # row-vector form of rot.T @ p
        done = d < TRACE_TOL
        hit[idx[done]] = True
        z[idx] += np.where(done, 0.0, np.maximum(d, TRACE_MIN_STEP))
        escaped = z[idx] > top
        live[idx[done | escaped]] = False

    out[cand[hit]] = z[hit]
    return out.reshape(xs.shape)
