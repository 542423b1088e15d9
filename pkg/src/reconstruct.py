"""Normal map → height map by Frankot–Chellappa integration.

Slopes g = (−n_x/n_z, −n_y/n_z) are mirror-extended to a 2H×2W field (so the
FFT's periodic boundary sees no jump), integrated in the frequency domain by
least squares, cropped, scaled by the pixel pitch and shifted to zero mean.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DomainError, ShapeError
from .optics import HeightMap

MIN_NZ = 0.1


def slopes(normals: np.ndarray, min_nz: float = MIN_NZ) -> tuple[np.ndarray, np.ndarray]:
    """(∂h/∂x, ∂h/∂y) from unit normals, n_z clamped below at `min_nz`."""
    n = np.asarray(normals, dtype=np.float64)
    if n.ndim != 3 or n.shape[-1] != 3:
        raise ShapeError(f"normal map must be H×W×3, got dims {list(n.shape)}")
    if not np.any(np.linalg.norm(n, axis=-1) > 0):
        raise DomainError("normal map is all zeros — nothing to integrate")
    nz = np.maximum(n[..., 2], min_nz)
    return -n[..., 0] / nz, -n[..., 1] / nz


def _mirror(gx: np.ndarray, gy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Even extension of h ⇒ odd in x for ∂h/∂x, odd in y for ∂h/∂y."""
    gx_ext = np.block([[gx, -gx[:, ::-1]], [gx[::-1, :], -gx[::-1, ::-1]]])
    gy_ext = np.block([[gy, gy[:, ::-1]], [-gy[::-1, :], -gy[::-1, ::-1]]])
    return gx_ext, gy_ext


def frankot_chellappa(gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Least-squares integrable surface for a gradient field on a unit pixel grid."""
    h, w = gx.shape
    wx = 2.0 * np.pi * np.fft.fftfreq(w)
    wy = 2.0 * np.pi * np.fft.fftfreq(h)
    u, v = np.meshgrid(wx, wy)
    denom = u * u + v * v
    denom[0, 0] = 1.0
    z = (-1j * u * np.fft.fft2(gx) - 1j * v * np.fft.fft2(gy)) / denom
    z[0, 0] = 0.0
    return np.real(np.fft.ifft2(z))


def reconstruct_height(normals: np.ndarray, pitch_mm: float = 1.0, min_nz: float = MIN_NZ) -> HeightMap:
    """Zero-mean height field (mm) whose normals best match `normals`."""
    if pitch_mm <= 0:
        raise ConfigError(f"pixel pitch must be > 0 mm, got {pitch_mm}")
    gx, gy = slopes(normals, min_nz)
    rows, cols = gx.shape
    gx_ext, gy_ext = _mirror(gx, gy)
    height = frankot_chellappa(gx_ext, gy_ext)[:rows, :cols] * pitch_mm
    return HeightMap(height - height.mean(), pitch_mm)
