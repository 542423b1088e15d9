"""Tests for the exception hierarchy and exit codes."""

import pytest

from src.errors import (
    ConfigError,
    ContractError,
    DomainError,
    GraphError,
    ManifestError,
    NumericError,
    ShapeError,
    SitrError,
    StoreError,
    UsageError,
)


@pytest.mark.parametrize("cls,code", [
    (UsageError, 2),
    (ConfigError, 2),
    (StoreError, 3),
    (ManifestError, 3),
    (NumericError, 4),
    (ContractError, 5),
    (ShapeError, 5),
    (DomainError, 5),
    (GraphError, 5),
])
def test_exit_codes(cls, code):
    assert cls.exit_code == code
    assert issubclass(cls, SitrError)


def test_builtin_bases():
    assert issubclass(ConfigError, ValueError)
    assert issubclass(StoreError, OSError)
    assert issubclass(NumericError, ArithmeticError)
    assert issubclass(GraphError, RuntimeError)


def test_numeric_error_step():
    err = NumericError("loss is nan", step=7)
    assert err.step == 7
    assert str(err) == "loss is nan"
