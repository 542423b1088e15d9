"""Logging setup — one Rich handler on the `src` logger.

Level resolution order: explicit argument, env SITR_LOG, user config, "warn".
"""

from __future__ import annotations

import logging
import os

from rich.console import Console
from rich.logging import RichHandler

ENV_VAR = "SITR_LOG"

LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "warning": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}

_HANDLER_NAME = "sitr-rich"


def resolve_level(level: str | None = None, config_level: str | None = None) -> int:
    """Map a level name (or the env var / config fallback) to a logging level."""
    name = level or os.environ.get(ENV_VAR) or config_level or "warn"
    try:
        return LEVELS[name.strip().lower()]
    except KeyError:
        from .errors import ConfigError
        raise ConfigError(
            f"Unknown log level {name!r} — use one of error, warn, info, debug "
            f"(flag --log-level or env {ENV_VAR})"
        ) from None


def setup_logging(level: str | None = None, config_level: str | None = None) -> logging.Logger:
    """Install (once) a RichHandler writing to stderr and set the package level."""
    logger = logging.getLogger("src")
    logger.setLevel(resolve_level(level, config_level))
    if not any(h.get_name() == _HANDLER_NAME for h in logger.handlers):
        handler = RichHandler(
            console=Console(stderr=True),
            show_path=False,
            rich_tracebacks=False,
        )
        handler.set_name(_HANDLER_NAME)
        handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
        logger.addHandler(handler)
    return logger
