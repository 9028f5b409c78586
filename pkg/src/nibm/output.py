"""Deterministic output files and run manifests."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from humanize import naturalsize
from packaging.version import Version

from nibm.errors import DomainError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
"""Version of the manifest schema written by this package."""
MANIFEST_NAME = "manifest.json"
"""File name of the manifest in an output directory."""


def format_value(value: Any) -> str:
    """Format a CSV cell. Floats use 17 significant digits."""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, complex):
        return f"{value.real:.17g}{value.imag:+.17g}j"
    if hasattr(value, "item"):
        return format_value(value.item())
    return str(value)


def atomic_write(path: Path, content: str) -> Path:
    """Write a file through a temporary file and a rename.

    Parameters:
        path: Destination.
        content: Text to write.

    Returns:
        The destination.
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    descriptor, temporary = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(descriptor, "w", encoding="utf8", newline="") as file:
            file.write(content)
        os.replace(temporary, path)
    except BaseException:
        Path(temporary).unlink(missing_ok=True)
        raise
    logger.debug(f"wrote {path} ({naturalsize(len(content.encode()))})")
    return path


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Write an RFC 4180 CSV file."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(value) for value in row])
    return atomic_write(path, buffer.getvalue())


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(key): _jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    if isinstance(value, complex):
        return [value.real, value.imag]
    if hasattr(value, "tolist"):
        return _jsonable(value.tolist())
    return value


def dumps(data: Any) -> str:
    """Serialize to JSON with sorted keys."""
    return json.dumps(_jsonable(data), indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_json(path: Path, data: Any) -> Path:
    """Write a JSON file with sorted keys."""
    return atomic_write(path, dumps(data))


def digest(path: Path) -> str:
    """SHA-256 digest of a file."""
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class RunManifest:
    """Record of one run, enough to reproduce its outputs."""

    subcommand: str
    argv: list[str]
    """Arguments of the subcommand, output directory excluded."""
    params: dict[str, Any]
    seed: int | None
    version: str
    """Version of the tool that produced the run."""
    tolerances: dict[str, float]
    outputs: dict[str, str] = field(default_factory=dict)
    """Content digests keyed by file name."""
    schema_version: str = SCHEMA_VERSION

    def record(self, path: Path) -> None:
        """Add an output file and its digest."""
        self.outputs[path.name] = digest(path)

    def save(self, directory: Path) -> Path:
        """Write the manifest in an output directory."""
        return write_json(directory / MANIFEST_NAME, asdict(self))

    @classmethod
    def load(cls, path: Path) -> RunManifest:
        """Read a manifest.

        Parameters:
            path: Manifest file, or the directory containing it.

        Raises:
            DomainError: When the file is not a compatible manifest.

        Returns:
            The manifest.
        """
        if path.is_dir():
            path = path / MANIFEST_NAME
        try:
            data = json.loads(path.read_text(encoding="utf8"))
        except (OSError, ValueError) as error:
            raise DomainError(f"cannot read manifest {path}: {error}", path=str(path)) from error
        version = Version(str(data.get("schema_version", "0")))
        if version.major != Version(SCHEMA_VERSION).major:
            raise DomainError(
                f"manifest schema {version} is not compatible with {SCHEMA_VERSION}",
                path=str(path),
            )
        fields = {"subcommand", "argv", "params", "seed", "version", "tolerances", "outputs"}
        missing = fields - data.keys()
        if missing:
            raise DomainError(f"manifest {path} lacks {sorted(missing)}", path=str(path))
        return cls(**{key: data[key] for key in fields}, schema_version=str(version))

    def differences(self, other: RunManifest) -> list[str]:
        """Names of the outputs whose digests differ from another run."""
        names = sorted(set(self.outputs) | set(other.outputs))
        return [name for name in names if self.outputs.get(name) != other.outputs.get(name)]
