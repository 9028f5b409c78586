"""Version and environment report, printed by `nibm --debug-info`."""

from __future__ import annotations

import os
import platform
import sys
from dataclasses import dataclass, field
from importlib import metadata

from mpmath import libmp

from nibm.config import ENV_PREFIX, OUTPUT_DIR_ENV, resolve_tolerances
from nibm.errors import NibmError
from nibm.kernel import default_precision

_DISTRIBUTIONS = ("nibm", "numpy", "scipy", "mpmath", "cappa", "humanize", "packaging")
_PRECISION_PROBES = (32, 64, 128)


@dataclass
class Variable:
    """An environment variable read by `nibm`."""

    name: str
    value: str


@dataclass
class Package:
    """An installed distribution and its version."""

    name: str
    version: str


@dataclass
class Environment:
    """What a bug report about a numerical run needs."""

    python: str
    """Implementation, version and executable."""
    platform: str
    cpu_count: int
    """Number of CPUs usable as worker threads."""
    mpmath_backend: str
    """`gmpy` or `python`: the integer backend of the multiprecision kernel."""
    precision_ladder: dict[int, int] = field(default_factory=dict)
    """Default significand bits by number of paths."""
    packages: list[Package] = field(default_factory=list)
    variables: list[Variable] = field(default_factory=list)
    """`NIBM*` variables and `PYTHONPATH`."""
    tolerances: dict[str, float] | str = field(default_factory=dict)
    """Effective tolerances, or the error raised by the environment overrides."""


def get_version(dist: str = "nibm") -> str:
    """Get version of the given distribution.

    Parameters:
        dist: A distribution name.

    Returns:
        A version number.
    """
    try:
        return metadata.version(dist)
    except metadata.PackageNotFoundError:
        return "0.0.0"


def get_debug_info() -> Environment:
    """Collect environment information.

    Returns:
        Environment information.
    """
    names = ["PYTHONPATH", *sorted(name for name in os.environ if name.startswith("NIBM"))]
    try:
        tolerances: dict[str, float] | str = resolve_tolerances().as_dict()
    except NibmError as error:
        tolerances = str(error)
    return Environment(
        python=f"{platform.python_implementation()} {platform.python_version()} ({sys.executable})",
        platform=platform.platform(),
        cpu_count=os.cpu_count() or 1,
        mpmath_backend=str(libmp.BACKEND),
        precision_ladder={n: default_precision(n) for n in _PRECISION_PROBES},
        packages=[Package(name, get_version(name)) for name in _DISTRIBUTIONS],
        variables=[Variable(name, value) for name in names if (value := os.getenv(name))],
        tolerances=tolerances,
    )


def print_debug_info() -> None:
    """Print environment information as a Markdown list."""
    info = get_debug_info()
    print(f"- __System__: {info.platform} ({info.cpu_count} CPUs)")
    print(f"- __Python__: {info.python}")
    print(f"- __Environment variables__ (`{ENV_PREFIX}<NAME>`, `{OUTPUT_DIR_ENV}`):")
    for var in info.variables:
        print(f"  - `{var.name}`: `{var.value}`")
    print("- __Installed packages__:")
    for pkg in info.packages:
        print(f"  - `{pkg.name}` v{pkg.version}")
    ladder = ", ".join(f"n <= {n}: {bits}" for n, bits in info.precision_ladder.items())
    print(f"- __Multiprecision__: {info.mpmath_backend} backend, default bits {ladder}")
    print("- __Tolerances__:")
    if isinstance(info.tolerances, str):
        print(f"  - invalid override: {info.tolerances}")
    else:
        for name, value in info.tolerances.items():
            print(f"  - `{name}`: {value:g}")


if __name__ == "__main__":
    print_debug_info()
