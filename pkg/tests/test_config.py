"""Tests for config file management and run records."""

import json

import pytest

from src.config import RUN_CONFIG_NAME, RunConfig, encoder_defaults, load_config, save_config, set_value
from src.errors import ConfigError, StoreError, UsageError


@pytest.fixture
def config_home(tmp_path, monkeypatch):
    monkeypatch.setattr("src.config.CONFIG_DIR", tmp_path)
    monkeypatch.setattr("src.config.CONFIG_FILE", tmp_path / "config.yaml")
    return tmp_path


class TestConfig:
    def test_default_config(self, config_home):
        cfg = load_config()
        assert cfg["defaults"]["seed"] == 0
        assert cfg["defaults"]["log_level"] == "warn"
        assert cfg["encoder"]["embed_dim"] == 128

    def test_save_and_load(self, config_home):
        cfg = load_config()
        cfg["defaults"]["seed"] = 42
        cfg["defaults"]["log_level"] = "info"
        cfg["encoder"]["depth"] = 2
        cfg["note"] = "desk run"

        path = save_config(cfg)
        assert path.exists()

        loaded = load_config()
        assert loaded["defaults"]["seed"] == 42
        assert loaded["defaults"]["log_level"] == "info"
        assert loaded["encoder"]["depth"] == 2
        assert loaded["note"] == "desk run"

    def test_null_values_roundtrip(self, config_home):
        cfg = load_config()
        cfg["defaults"]["threads"] = None
        save_config(cfg)
        assert load_config()["defaults"]["threads"] is None

    def test_bool_values_roundtrip(self, config_home):
        cfg = load_config()
        cfg["defaults"]["augment"] = True
        save_config(cfg)
        assert load_config()["defaults"]["augment"] is True

    def test_partial_file_keeps_defaults(self, config_home):
        (config_home / "config.yaml").write_text("encoder:\n  depth: 6\n")
        cfg = load_config()
        assert cfg["encoder"]["depth"] == 6
        assert cfg["encoder"]["patch_size"] == 8
        assert cfg["defaults"]["seed"] == 0

    def test_comments_ignored(self, config_home):
        (config_home / "config.yaml").write_text("# user file\ndefaults:\n  # seed below\n  seed: 7\n")
        assert load_config()["defaults"]["seed"] == 7


class TestSetValue:
    def test_parses_like_the_file(self, config_home):
        cfg = load_config()
        set_value(cfg, "encoder.depth=6")
        set_value(cfg, "defaults.log_level = info")
        set_value(cfg, "defaults.threads=null")
        assert cfg["encoder"]["depth"] == 6
        assert cfg["defaults"]["log_level"] == "info"
        assert cfg["defaults"]["threads"] is None

    @pytest.mark.parametrize("assignment", ["encoder.depth", "depth=6", "encoder.width=3", "gpu.count=1"])
    def test_rejected(self, config_home, assignment):
        with pytest.raises(UsageError) as info:
            set_value(load_config(), assignment)
        assert info.value.exit_code == 2


class TestEncoderDefaults:
    def test_from_config(self, config_home):
        (config_home / "config.yaml").write_text("encoder:\n  embed_dim: 64\n  num_heads: 2\n")
        arch = encoder_defaults()
        assert arch["embed_dim"] == 64
        assert arch["num_heads"] == 2
        assert arch["image_size"] == 64

    def test_non_integer(self, config_home):
        with pytest.raises(ConfigError):
            encoder_defaults({"encoder": {"depth": "deep"}})

    def test_missing_section(self, config_home):
        assert encoder_defaults({"defaults": {}})["depth"] == 4


class TestRunConfig:
    def test_write_and_read(self, tmp_path):
        rc = RunConfig("gen", {"sensors": 4, "calib": "k18"}, global_seed=3, out_dir=str(tmp_path))
        path = rc.write()
        assert path == tmp_path / RUN_CONFIG_NAME
        assert RunConfig.read(tmp_path) == rc

    def test_json_is_sorted(self, tmp_path):
        RunConfig("pretrain", {"b": 1, "a": 2}).write(tmp_path)
        data = json.loads((tmp_path / RUN_CONFIG_NAME).read_text())
        assert list(data) == sorted(data)
        assert data["command"] == "pretrain"

    def test_paths_serialized(self, tmp_path):
        RunConfig("render", {"out": tmp_path / "x"}).write(tmp_path)
        assert RunConfig.read(tmp_path).flags["out"] == str(tmp_path / "x")

    def test_read_missing(self, tmp_path):
        with pytest.raises(StoreError):
            RunConfig.read(tmp_path)

    def test_read_malformed(self, tmp_path):
        (tmp_path / RUN_CONFIG_NAME).write_text("{")
        with pytest.raises(StoreError):
            RunConfig.read(tmp_path)

    def test_unwritable(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(StoreError):
            RunConfig("gen").write(blocker / "sub")
