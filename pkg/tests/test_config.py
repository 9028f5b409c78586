"""Tests for the `config` and `errors` modules."""

from __future__ import annotations

from pathlib import Path

import pytest

from nibm import errors
from nibm.config import DEFAULT_TOLERANCES, Tolerances, default_output_dir, parse_override, resolve_tolerances


def test_defaults() -> None:
    """Default tolerances are the documented ones."""
    assert DEFAULT_TOLERANCES.resid == 1e-9
    assert DEFAULT_TOLERANCES.bp == 1e-6
    assert DEFAULT_TOLERANCES.crit == 1e-6
    assert DEFAULT_TOLERANCES.ladder == (1e-6, 1e-7, 1e-8)


@pytest.mark.parametrize(
    ("text", "expected"),
    [
        ("bp=1e-7", ("bp", 1e-7)),
        (" RESID = 2e-10 ", ("resid", 2e-10)),
        ("mass=0.5", ("mass", 0.5)),
    ],
)
def test_parse_override(text: str, expected: tuple[str, float]) -> None:
    """Overrides are parsed case-insensitively."""
    assert parse_override(text) == expected


@pytest.mark.parametrize("text", ["bp", "=1", "bp=abc"])
def test_parse_malformed_override(text: str) -> None:
    """Malformed overrides are parameter errors."""
    with pytest.raises(errors.DomainError):
        parse_override(text)


def test_environment_then_command_line() -> None:
    """Command-line overrides win over environment variables."""
    environ = {"NIBM_TAU_BP": "1e-5", "NIBM_TAU_MASS": "1e-6", "OTHER": "x"}
    tol = resolve_tolerances(["bp=1e-7"], environ)
    assert tol.bp == 1e-7
    assert tol.mass == 1e-6
    assert tol.resid == DEFAULT_TOLERANCES.resid


@pytest.mark.parametrize("overrides", [{"nope": 1.0}, {"bp": 0.0}, {"bp": -1.0}])
def test_invalid_overrides(overrides: dict[str, float]) -> None:
    """Unknown names and non-positive values are rejected."""
    with pytest.raises(errors.DomainError):
        Tolerances().with_overrides(overrides)


def test_output_dir() -> None:
    """The output directory comes from the environment, with a default."""
    assert default_output_dir({}) == Path("nibm-out")
    assert default_output_dir({"NIBM_OUTPUT_DIR": "/tmp/x"}) == Path("/tmp/x")


@pytest.mark.parametrize(
    ("error_class", "exit_code", "code"),
    [
        (errors.DomainError, 2, "domain-error"),
        (errors.CriticalTimeError, 2, "critical-time"),
        (errors.PoleError, 2, "pole"),
        (errors.PathError, 3, "path"),
        (errors.PrecisionError, 3, "precision"),
        (errors.EdgeFitError, 3, "edge-fit"),
        (errors.InfeasibleError, 4, "infeasible"),
    ],
)
def test_error_codes(error_class: type[errors.NibmError], exit_code: int, code: str) -> None:
    """Errors carry their exit status and machine code."""
    error = error_class("message", a=0.6)
    assert error.exit_code == exit_code
    assert error.as_dict() == {"code": code, "message": "message", "params": {"a": 0.6}}
