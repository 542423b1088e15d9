"""Tests for artifact exporters — PNG, CSV, JSON."""

import csv
import json

import numpy as np
import pytest

from src.errors import StoreError
from src.exporters import (
    export_ablation_csv,
    export_embeddings_csv,
    export_loss_csv,
    export_matrix_csv,
    read_json,
    read_png,
    to_json,
    to_uint8,
    write_height_png,
    write_png,
    write_signal_png,
)


def read_matrix(path):
    """Sensor ids and score matrix from a transfer_matrix.csv."""
    rows = list(csv.reader(path.read_text().splitlines()))
    return rows[0][1:], np.array([[float(v) for v in r[1:]] for r in rows[1:]])


class TestJSON:
    def test_sorted_keys(self):
        text = to_json({"b": 1, "a": 2})
        assert text.index('"a"') < text.index('"b"')
        assert text.endswith("\n")

    def test_writes_to_file(self, tmp_path):
        path = tmp_path / "sub" / "out.json"
        to_json({"x": [1, 2]}, path)
        assert read_json(path) == {"x": [1, 2]}

    def test_malformed(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{")
        with pytest.raises(StoreError):
            read_json(path)

    def test_missing(self, tmp_path):
        with pytest.raises(StoreError):
            read_json(tmp_path / "absent.json")


class TestPNG:
    def test_to_uint8_rounding_and_clamp(self):
        np.testing.assert_array_equal(to_uint8(np.array([-0.5, 0.0, 0.5, 1.0, 2.0])), [0, 0, 128, 255, 255])

    def test_rgb_roundtrip_quantized(self, tmp_path):
        values = np.random.default_rng(0).uniform(0, 1, (8, 8, 3)).astype(np.float32)
        back = read_png(write_png(tmp_path / "a.png", values))
        assert back.shape == (8, 8, 3)
        assert np.abs(back - values).max() <= 0.5 / 255 + 1e-6

    def test_grayscale(self, tmp_path):
        back = read_png(write_png(tmp_path / "g.png", np.full((4, 4), 0.5)))
        assert back.shape == (4, 4)

    def test_zero_signal_is_mid_gray(self, tmp_path):
        path = write_signal_png(tmp_path / "s.png", np.zeros((4, 4, 3)))
        np.testing.assert_array_equal(to_uint8(read_png(path)), 128)

    def test_height_preview_spans_range(self, tmp_path):
        h = np.linspace(-1, 1, 16).reshape(4, 4)
        back = to_uint8(read_png(write_height_png(tmp_path / "h.png", h)))
        assert back.min() == 0 and back.max() == 255

    def test_flat_height_preview(self, tmp_path):
        back = read_png(write_height_png(tmp_path / "f.png", np.zeros((4, 4))))
        np.testing.assert_array_equal(back, 0.0)

    def test_unreadable(self, tmp_path):
        path = tmp_path / "x.png"
        path.write_bytes(b"not a png")
        with pytest.raises(StoreError):
            read_png(path)


class TestCSV:
    def test_matrix_roundtrip_exact(self, tmp_path):
        m = np.random.default_rng(1).uniform(0, 1, (3, 3))
        export_matrix_csv(m, ["a", "b", "c"], tmp_path / "m.csv")
        ids, back = read_matrix(tmp_path / "m.csv")
        assert ids == ["a", "b", "c"]
        np.testing.assert_array_equal(back, m)

    def test_matrix_header(self):
        text = export_matrix_csv(np.eye(2), ["s0", "s1"])
        assert text.splitlines()[0] == "train_sensor,s0,s1"
        assert text.splitlines()[1].startswith("s0,1.0,0.0")

    def test_loss_rows(self):
        history = [{"step": 1, "epoch": 1, "total": 2.0, "normal": 1.5, "scl": 0.5}]
        lines = export_loss_csv(history).splitlines()
        assert lines[0] == "step,l_normal,l_scl,total"
        assert lines[1] == "1,1.5,0.5,2.0"

    def test_embeddings(self):
        text = export_embeddings_csv(["s0", "s1"], ["c0", "c0"], [3, 3], np.ones((2, 4)))
        lines = text.splitlines()
        assert lines[0] == "sensor_id,contact_id,label,e0,e1,e2,e3"
        assert len(lines) == 3

    def test_ablation(self, tmp_path):
        cells = [{
            "axis": "tau", "value": "0.07", "metric_kind": "accuracy",
            "transfer": 0.5, "transfer_std": 0.1, "no_transfer": 0.9, "no_transfer_std": 0.05,
        }]
        export_ablation_csv(cells, tmp_path / "ablation.csv")
        lines = (tmp_path / "ablation.csv").read_text().splitlines()
        assert lines[0].startswith("axis,value,metric_kind,transfer")
        assert lines[1].startswith("tau,0.07,accuracy,0.5")

    def test_json_loads_summary(self, tmp_path):
        to_json({"transfer": 0.25, "metric_kind": "rmse"}, tmp_path / "summary.json")
        assert json.loads((tmp_path / "summary.json").read_text())["metric_kind"] == "rmse"
