"""Configuration — user defaults file and per-run config records.

~/.sitr/config.yaml holds user defaults (seed, threads, log level) and the
desk-scale encoder architecture. CLI flags override it; it overrides the
built-in defaults.

Every command writes run_config.json into its output location before doing
any work, so a run can be reproduced from that file alone.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ConfigError, StoreError, UsageError

logger = logging.getLogger(__name__)

CONFIG_DIR = Path.home() / ".sitr"
CONFIG_FILE = CONFIG_DIR / "config.yaml"
RUN_CONFIG_NAME = "run_config.json"


def _parse_value(val: str):
    """Parse a YAML-like value string into a Python type."""
    if val == "null" or val == "~" or val == "":
        return None
    if val.lower() == "true":
        return True
    if val.lower() == "false":
        return False
    try:
        return int(val)
    except ValueError:
        pass
    try:
        return float(val)
    except ValueError:
        pass
    # Strip quotes
    if (val.startswith('"') and val.endswith('"')) or \
       (val.startswith("'") and val.endswith("'")):
        return val[1:-1]
    return val


def _default_config() -> dict:
    return {
        "defaults": {
            "seed": 0,
            "threads": 1,
            "log_level": "warn",
        },
        "encoder": {
            "image_size": 64,
            "patch_size": 8,
            "embed_dim": 128,
            "depth": 4,
            "num_heads": 4,
        },
    }


def load_config() -> dict:
    """Load ~/.sitr/config.yaml over the built-in defaults.

    Uses simple key: value parsing to avoid a PyYAML dependency. A file that
    cannot be read is ignored with a warning.
    """
    config = _default_config()
    if not CONFIG_FILE.exists():
        return config

    try:
        text = CONFIG_FILE.read_text()
    except OSError as e:
        logger.warning("ignoring unreadable config %s: %s", CONFIG_FILE, e)
        return config

    current_section = None
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("#") or ":" not in stripped:
            continue
        is_indented = line.startswith("  ") or line.startswith("\t")
        key, _, val = stripped.partition(":")
        key, val = key.strip(), val.strip()

        if not is_indented:
            if not val:
                # Section header (e.g., "encoder:")
                current_section = key
                config.setdefault(current_section, {})
            else:
                current_section = None
                config[key] = _parse_value(val)
            continue

        if current_section and isinstance(config.get(current_section), dict):
            config[current_section][key] = _parse_value(val)
        else:
            config[key] = _parse_value(val)
    return config


def save_config(config: dict) -> Path:
    """Save config to ~/.sitr/config.yaml. Returns the path written."""
    CONFIG_DIR.mkdir(parents=True, exist_ok=True)

    lines = ["# sitr configuration", ""]
    for section, values in config.items():
        if isinstance(values, dict):
            lines.append(f"{section}:")
            for key, val in values.items():
                lines.append(f"  {key}: {_format_value(val)}")
            lines.append("")
        else:
            lines.append(f"{section}: {_format_value(values)}")

    CONFIG_FILE.write_text("\n".join(lines) + "\n")
    return CONFIG_FILE


def _format_value(val) -> str:
    if val is None:
        return "null"
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, str):
        return f"\"{val}\""
    return str(val)


def set_value(config: dict, assignment: str) -> None:
    """Apply one `section.key=value` assignment in place.

    Only keys the built-in defaults know are accepted; the value is parsed the
    same way the config file is.
    """
    target, sep, raw = assignment.partition("=")
    section, dot, key = target.strip().partition(".")
    if not sep or not dot:
        raise UsageError(f"--set expects section.key=value, got {assignment!r}")
    known = _default_config()
    if key not in known.get(section, {}):
        choices = ", ".join(f"{s}.{k}" for s, keys in known.items() for k in keys)
        raise UsageError(f"unknown config key {target.strip()!r}; choose from {choices}")
    config.setdefault(section, {})[key] = _parse_value(raw.strip())


def encoder_defaults(config: dict | None = None) -> dict:
    """Encoder architecture kwargs from the user config, validated as ints."""
    section = (config or load_config()).get("encoder") or {}
    out = {}
    for key in ("image_size", "patch_size", "embed_dim", "depth", "num_heads"):
        val = section.get(key, _default_config()["encoder"][key])
        if not isinstance(val, int) or isinstance(val, bool):
            raise ConfigError(f"{CONFIG_FILE}: encoder.{key} must be an integer, got {val!r}")
        out[key] = val
    return out


@dataclass
class RunConfig:
    """One CLI invocation: command, its flags, and the shared run settings."""

    command: str
    flags: dict = field(default_factory=dict)
    global_seed: int = 0
    out_dir: str = "."
    log_level: str = "warn"
    threads: int = 1

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=str) + "\n"

    def write(self, out_dir: str | Path | None = None) -> Path:
        """Write run_config.json into `out_dir` (default: this run's out_dir)."""
        path = Path(out_dir if out_dir is not None else self.out_dir) / RUN_CONFIG_NAME
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(self.to_json())
        except OSError as e:
            raise StoreError(f"Cannot write {path}: {e.strerror or e}") from None
        return path

    @classmethod
    def read(cls, path: str | Path) -> RunConfig:
        path = Path(path)
        if path.is_dir():
            path = path / RUN_CONFIG_NAME
        try:
            data = json.loads(path.read_text())
        except OSError as e:
            raise StoreError(f"Cannot read {path}: {e.strerror or e}") from None
        except json.JSONDecodeError as e:
            raise StoreError(f"{path}: malformed run config ({e})") from None
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in data.items() if k in known})
