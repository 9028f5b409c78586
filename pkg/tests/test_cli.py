"""Tests for the `cli` module."""

from __future__ import annotations

import json
from typing import TYPE_CHECKING

import pytest

from nibm import cli, debug
from nibm.output import RunManifest

if TYPE_CHECKING:
    from pathlib import Path

MODEL = ["--a", "0.6", "--b", "0.6"]


def test_main() -> None:
    """Basic CLI test."""
    with pytest.raises(SystemExit):
        cli.main([])


def test_show_help(capsys: pytest.CaptureFixture) -> None:
    """Show help.

    Parameters:
        capsys: Pytest fixture to capture output.
    """
    with pytest.raises(SystemExit):
        cli.main(["-h"])
    captured = capsys.readouterr()
    assert "nibm" in captured.out


def test_show_version(capsys: pytest.CaptureFixture) -> None:
    """Show version.

    Parameters:
        capsys: Pytest fixture to capture output.
    """
    with pytest.raises(SystemExit):
        cli.main(["-V"])
    captured = capsys.readouterr()
    assert debug.get_version() in captured.out


def test_show_debug_info(capsys: pytest.CaptureFixture) -> None:
    """Show debug information.

    Parameters:
        capsys: Pytest fixture to capture output.
    """
    with pytest.raises(SystemExit):
        cli.main(["--debug-info"])
    captured = capsys.readouterr().out.lower()
    assert "python" in captured
    assert "system" in captured
    assert "environment" in captured
    assert "packages" in captured
    assert "tolerances" in captured
    assert "multiprecision" in captured


def test_curve(tmp_path: Path) -> None:
    """The curve subcommand writes branch points, branches and a manifest."""
    assert cli.main(["curve", *MODEL, "--t", "0.25", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "curve.json").read_text())
    assert summary["branch_points"]["regime"] == "TwoCuts"
    assert summary["t_c1"] + summary["t_c2"] == pytest.approx(1)
    lines = (tmp_path / "xi.csv").read_text().splitlines()
    assert len(lines) == 42
    manifest = RunManifest.load(tmp_path)
    assert sorted(manifest.outputs) == ["curve.json", "xi.csv"]
    assert manifest.argv[0] == "curve"
    assert "--out" not in " ".join(manifest.argv)


def test_parameter_error(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    """Invalid parameters exit with status 2 and a JSON error.

    Parameters:
        tmp_path: Pytest fixture for a temporary directory.
        capsys: Pytest fixture to capture output.
    """
    with pytest.raises(SystemExit) as exit_info:
        cli.main(["curve", *MODEL, "--t", "0.2982634", "--out", str(tmp_path)])
    assert exit_info.value.code == 2
    error = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert error["code"] == "critical-time"
    assert error["params"]["t"] == 0.2982634


def test_tolerance_override_recorded(tmp_path: Path) -> None:
    """Tolerance overrides are recorded in the manifest."""
    segment = "--segment=0.5,0.5,1,1,3"
    cli.main(["curve", *MODEL, "--t", "0.45", "--tol", "resid=1e-8", segment, "--out", str(tmp_path)])
    manifest = RunManifest.load(tmp_path)
    assert manifest.tolerances["resid"] == 1e-8
    assert "--tol=resid=1e-8" in manifest.argv


def test_density(tmp_path: Path) -> None:
    """The density subcommand writes the profile and its summary."""
    cli.main(["density", *MODEL, "--t", "0.45", "--nodes", "64", "--check-edges", "--out", str(tmp_path)])
    summary = json.loads((tmp_path / "density.json").read_text())
    assert summary["regime"] == "OneCut"
    assert sorted(summary["edges"]) == ["-z1", "z1"]
    assert (tmp_path / "density.csv").read_text().startswith("x,rho,h\r\n")


def test_kernel_check(tmp_path: Path) -> None:
    """The kernel subcommand reports the trace and residuals."""
    cli.main(["kernel", *MODEL, "--t", "0.25", "--n", "4", "--mode", "check", "--out", str(tmp_path)])
    summary = json.loads((tmp_path / "check.json").read_text())
    assert summary["trace"] == pytest.approx(4, abs=1e-6)


def test_simulate_and_replay(tmp_path: Path) -> None:
    """A recorded run is reproduced bit for bit, and tampering is detected."""
    run = tmp_path / "run"
    argv = ["simulate", *MODEL, "--n", "2", "--steps", "50", "--count", "5", "--seed", "4", "--out", str(run)]
    assert cli.main(argv) == 0
    assert RunManifest.load(run).seed == 4
    assert cli.main(["replay", str(run), "--out", str(tmp_path / "again")]) == 0
    manifest = RunManifest.load(run)
    manifest.outputs["paths.csv"] = "0" * 64
    manifest.save(run)
    with pytest.raises(SystemExit) as exit_info:
        cli.main(["replay", str(run), "--out", str(tmp_path / "third")])
    assert exit_info.value.code == 1


def test_infeasible_simulation(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    """Out-of-range path counts exit with status 2.

    Parameters:
        tmp_path: Pytest fixture for a temporary directory.
        capsys: Pytest fixture to capture output.
    """
    with pytest.raises(SystemExit) as exit_info:
        cli.main(["simulate", *MODEL, "--n", "12", "--out", str(tmp_path)])
    assert exit_info.value.code == 2
    assert json.loads(capsys.readouterr().out.strip().splitlines()[-1])["code"] == "domain-error"


@pytest.mark.parametrize(
    "args",
    [
        ["phase", *MODEL, "--t-grid", "0.1,0.9"],
        ["phase", *MODEL, "--t-grid", "0.1,0.9,2.5"],
        ["curve", *MODEL, "--t", "0.45", "--threads", "0"],
    ],
)
def test_invalid_options(tmp_path: Path, capsys: pytest.CaptureFixture, args: list[str]) -> None:
    """Malformed time grids and thread counts exit with status 2.

    Parameters:
        tmp_path: Pytest fixture for a temporary directory.
        capsys: Pytest fixture to capture output.
        args: Command line arguments.
    """
    with pytest.raises(SystemExit) as exit_info:
        cli.main([*args, "--out", str(tmp_path)])
    assert exit_info.value.code == 2
    assert json.loads(capsys.readouterr().out.strip().splitlines()[-1])["code"] == "domain-error"


@pytest.mark.slow
def test_phase(tmp_path: Path) -> None:
    """The phase subcommand sweeps the regimes."""
    cli.main(["phase", *MODEL, "--t-grid", "0.1,0.9,5", "--level-size", "5", "--out", str(tmp_path)])
    rows = (tmp_path / "phase.csv").read_text().splitlines()[1:]
    assert [row.split(",")[-1] for row in rows] == ["TwoCuts", "OneCut", "OneCut", "OneCut", "TwoCuts"]
    summary = json.loads((tmp_path / "phase.json").read_text())
    assert summary["t_c1"] == pytest.approx(0.298263354)
