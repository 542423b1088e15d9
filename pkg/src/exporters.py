"""Write pipeline artifacts in inspectable formats.

Formats:
- PNG:  8-bit RGB tactile images, signals mapped through (s+1)/2, grayscale heights
- CSV:  transfer matrices, per-step losses, embeddings, ablation rows
- JSON: manifests, summaries, sensor configs (always sorted keys, so reruns
        produce byte-identical files)

Every text exporter returns the string and also writes it when `path` is given.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

from .errors import StoreError


def _write_text(path: str | Path | None, text: str) -> None:
    if not path:
        return
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as e:
        raise StoreError(f"Cannot write {path}: {e.strerror or e}") from None


def to_json(data, path: str | Path | None = None) -> str:
    text = json.dumps(data, indent=2, sort_keys=True) + "\n"
    _write_text(path, text)
    return text


def read_json(path: str | Path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except OSError as e:
        raise StoreError(f"Cannot read {path}: {e.strerror or e}") from None
    except json.JSONDecodeError as e:
        raise StoreError(f"{path}: malformed JSON ({e})") from None


# --- Images ---

def to_uint8(values: np.ndarray) -> np.ndarray:
    """[0,1] floats → 0..255 with round-half-even, clamped."""
    return np.clip(np.rint(np.asarray(values, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_png(path: str | Path, values: np.ndarray) -> Path:
    """Save an H×W×3 or H×W array in [0,1] as an 8-bit PNG."""
    path = Path(path)
    pixels = to_uint8(values)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(pixels).save(path, format="PNG")
    except OSError as e:
        raise StoreError(f"Cannot write PNG {path}: {e.strerror or e}") from None
    return path


def read_png(path: str | Path) -> np.ndarray:
    """Load an 8-bit PNG back to float32 in [0,1]."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            pixels = np.asarray(img.convert("RGB") if img.mode not in ("RGB", "L") else img)
    except (OSError, ValueError) as e:
        raise StoreError(f"Cannot read PNG {path}: {e}") from None
    return (pixels.astype(np.float32) / 255.0).astype(np.float32)


def write_signal_png(path: str | Path, signal: np.ndarray) -> Path:
    """Background-subtracted signal in [-1,1] → PNG via (s+1)/2, so zero is gray 128."""
    return write_png(path, (np.asarray(signal, dtype=np.float64) + 1.0) / 2.0)


def write_height_png(path: str | Path, height: np.ndarray) -> Path:
    """Grayscale preview of a height field, min→black, max→white."""
    h = np.asarray(height, dtype=np.float64)
    span = h.max() - h.min()
    preview = (h - h.min()) / span if span > 0 else np.zeros_like(h)
    return write_png(path, preview)


# --- Tables ---

def export_matrix_csv(
    matrix: np.ndarray, sensor_ids: Sequence[str], path: str | Path | None = None
) -> str:
    """Transfer matrix with a header row of eval sensors; row i = trained on sensor i."""
    output = io.StringIO()
    writer = csv.writer(output, lineterminator="\n")
    writer.writerow(["train_sensor", *sensor_ids])
    for sid, row in zip(sensor_ids, np.asarray(matrix)):
        writer.writerow([sid, *(repr(float(v)) for v in row)])
    text = output.getvalue()
    _write_text(path, text)
    return text


def export_rows_csv(
    header: Sequence[str], rows: Iterable[Sequence], path: str | Path | None = None
) -> str:
    """Generic table writer used for losses, ablation cells and embeddings."""
    output = io.StringIO()
    writer = csv.writer(output, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    text = output.getvalue()
    _write_text(path, text)
    return text


def export_loss_csv(history: Iterable[dict], path: str | Path | None = None) -> str:
    """One row per optimizer step: step, l_normal, l_scl, total."""
    rows = ([h["step"], h["normal"], h["scl"], h["total"]] for h in history)
    return export_rows_csv(["step", "l_normal", "l_scl", "total"], rows, path)


def export_embeddings_csv(
    sensor_ids: Sequence[str],
    contact_ids: Sequence[str],
    labels: Sequence,
    embeddings: np.ndarray,
    path: str | Path | None = None,
) -> str:
    """Rows of sensor_id, contact_id, label, e0..e{d-1}."""
    emb = np.asarray(embeddings)
    header = ["sensor_id", "contact_id", "label", *(f"e{i}" for i in range(emb.shape[1]))]
    rows = (
        [s, c, lab, *(float(v) for v in e)]
        for s, c, lab, e in zip(sensor_ids, contact_ids, labels, emb)
    )
    return export_rows_csv(header, rows, path)


def export_ablation_csv(cells: Iterable[dict], path: str | Path | None = None) -> str:
    """One row per ablation cell: axis, value, inter/intra transfer scores and their stds."""
    header = ["axis", "value", "metric_kind", "transfer", "transfer_std", "no_transfer", "no_transfer_std"]
    rows = ([c[k] for k in header] for c in cells)
    return export_rows_csv(header, rows, path)
