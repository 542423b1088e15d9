"""Exception hierarchy for sitr-sim.

Every error the pipeline raises on purpose derives from SitrError and carries
the process exit code the CLI maps it to:

  2  usage / invalid configuration
  3  IO, malformed files, manifest integrity
  4  numeric failure (non-finite loss)
  5  contract violation (shapes, task/label mismatch)
"""

from __future__ import annotations

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4
EXIT_CONTRACT = 5


class SitrError(Exception):
    """Base class; `exit_code` is what the CLI exits with."""

    exit_code = EXIT_CONTRACT


class UsageError(SitrError):
    exit_code = EXIT_USAGE


class ConfigError(SitrError, ValueError):
    """A configuration value outside its allowed range."""

    exit_code = EXIT_USAGE


class StoreError(SitrError, OSError):
    """Unreadable, unwritable or malformed on-disk data."""

    exit_code = EXIT_IO


class ManifestError(StoreError):
    """Dataset manifest fails referential integrity."""


class NumericError(SitrError, ArithmeticError):
    """Non-finite value in training. `step` is the optimizer step, if known."""

    exit_code = EXIT_NUMERIC

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class ContractError(SitrError):
    """Inputs violate an operation's contract (e.g. task without labels)."""

    exit_code = EXIT_CONTRACT


class ShapeError(ContractError, ValueError):
    """Tensor dimensions do not agree."""


class DomainError(ContractError, ValueError):
    """Math function evaluated outside its domain (log/sqrt of negatives)."""


class GraphError(ContractError, RuntimeError):
    """Misuse of the autodiff graph (non-scalar loss, double backward)."""
