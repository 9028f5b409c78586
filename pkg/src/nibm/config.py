"""Tolerances and run defaults.

Values are read from (by increasing priority) the defaults below,
`NIBM_TAU_<NAME>` environment variables, and `--tol NAME=VALUE` options.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping

from nibm.errors import DomainError

logger = logging.getLogger(__name__)

ENV_PREFIX = "NIBM_TAU_"
OUTPUT_DIR_ENV = "NIBM_OUTPUT_DIR"


@dataclass(frozen=True)
class Tolerances:
    """Numerical tolerances shared by all operations."""

    resid: float = 1e-9
    """Relative quartic residual accepted for a root."""
    bp: float = 1e-6
    """Exclusion radius around branch points, relative to `z1`."""
    classify: float = 1e-8
    """Imaginary-part threshold below which a value is declared real."""
    crit: float = 1e-6
    """Exclusion radius around the critical times and around `a * b = 1/2`."""
    period: float = 1e-6
    """Distance to the nearest half-integer accepted for a period."""
    pole: float = 1e-8
    """Exclusion radius around the poles of the rational parametrization."""
    mass: float = 1e-8
    """Accepted deviation of the total mass from one."""
    gap_ratio: float = 10.0
    """Minimal ratio between the root gap and the predictor displacement during continuation."""
    anchor: float = 1e6
    """Distance of the labelling anchor, in units of `max(1, z1)`."""
    richardson: float = 1e-6
    """Largest offset of the boundary-value ladder; the ladder divides it by 10 twice."""
    edge_band: float = 0.02
    """Accepted deviation of a fitted edge exponent from one half."""
    quadrature: float = 1e-12
    """Relative tolerance of the adaptive path quadrature."""

    @property
    def ladder(self) -> tuple[float, float, float]:
        """Relative offsets used for Richardson extrapolation of boundary values."""
        return (self.richardson, self.richardson / 10, self.richardson / 100)

    def with_overrides(self, overrides: Mapping[str, float]) -> Tolerances:
        """Return a copy with some values replaced.

        Parameters:
            overrides: New values keyed by field name.

        Raises:
            DomainError: When a name is unknown or a value is not positive.

        Returns:
            New tolerances.
        """
        known = {field.name for field in fields(self)}
        for name, value in overrides.items():
            if name not in known:
                raise DomainError(f"unknown tolerance '{name}'", name=name, known=sorted(known))
            if not value > 0:
                raise DomainError(f"tolerance '{name}' must be positive", name=name, value=value)
        return replace(self, **overrides)

    @classmethod
    def from_env(cls, environ: Mapping[str, str] | None = None) -> Tolerances:
        """Build tolerances from `NIBM_TAU_<NAME>` environment variables.

        Parameters:
            environ: The environment to read, `os.environ` by default.

        Returns:
            Tolerances with environment overrides applied.
        """
        environ = os.environ if environ is None else environ
        overrides = {}
        for key, value in environ.items():
            if key.startswith(ENV_PREFIX):
                name = key[len(ENV_PREFIX) :].lower()
                overrides[name] = _parse_float(name, value)
                logger.debug(f"tolerance {name}={value} from {key}")
        return cls().with_overrides(overrides)

    def as_dict(self) -> dict[str, Any]:
        """Return the tolerances as a plain dictionary."""
        return {field.name: getattr(self, field.name) for field in fields(self)}


DEFAULT_TOLERANCES = Tolerances()


def _parse_float(name: str, value: str) -> float:
    try:
        return float(value)
    except ValueError as error:
        raise DomainError(f"tolerance '{name}' is not a number: {value!r}", name=name, value=value) from error


def parse_override(text: str) -> tuple[str, float]:
    """Parse a `NAME=VALUE` tolerance override.

    Parameters:
        text: The override as given on the command line.

    Raises:
        DomainError: When the text is malformed.

    Returns:
        The tolerance name and its value.
    """
    name, sep, value = text.partition("=")
    if not sep or not name.strip():
        raise DomainError(f"expected NAME=VALUE, got {text!r}", override=text)
    name = name.strip().lower()
    return name, _parse_float(name, value.strip())


def resolve_tolerances(overrides: list[str] | None = None, environ: Mapping[str, str] | None = None) -> Tolerances:
    """Combine defaults, environment and command-line overrides.

    Parameters:
        overrides: `NAME=VALUE` strings, applied last.
        environ: The environment to read, `os.environ` by default.

    Returns:
        The tolerances in effect.
    """
    tol = Tolerances.from_env(environ)
    if overrides:
        tol = tol.with_overrides(dict(parse_override(item) for item in overrides))
    return tol


def default_output_dir(environ: Mapping[str, str] | None = None) -> Path:
    """Return the default output directory (`NIBM_OUTPUT_DIR`, or `./nibm-out`)."""
    environ = os.environ if environ is None else environ
    return Path(environ.get(OUTPUT_DIR_ENV, "nibm-out"))
