"""Module that contains the command line application."""

# Why does this file exist, and why not put this in `__main__`?
#
# You might be tempted to import things from `__main__` later,
# but that will cause problems: the code will get executed twice:
#
# - When you run `python -m nibm` python will execute
#   `__main__.py` as a script. That means there won't be any
#   `nibm.__main__` in `sys.modules`.
# - When you import `__main__` it will get executed again (as a module) because
#   there's no `nibm.__main__` in `sys.modules`.

from __future__ import annotations

import json
import logging
import math
import tempfile
from dataclasses import dataclass, field, fields
from functools import wraps
from inspect import cleandoc
from pathlib import Path
from typing import Annotated as An
from typing import Any, Callable, ClassVar

import cappa
import numpy as np
from typing_extensions import Doc

from nibm import debug
from nibm.config import Tolerances, default_output_dir, resolve_tolerances
from nibm.curve import (
    ModelParams,
    Regime,
    critical_times,
    discriminant_coefficients,
    lambda_grid,
    spectral_curve,
    sweep_branch_points,
)
from nibm.density import GridSpec, density_at, density_profile, edge_fit
from nibm.errors import DomainError, NibmError
from nibm.kernel import (
    biorthogonal_system,
    bulk_scaling_check,
    diagonal_density,
    edge_scaling_check,
    gram_residual,
    reproducing_check,
    trace_check,
)
from nibm.output import RunManifest, write_csv, write_json
from nibm.simulate import figure_paths, marginal_histogram, polyline_rows

NAME = "nibm"

logger = logging.getLogger(__name__)


def print_and_exit(
    func: An[Callable[[], str | None], Doc("A function that returns or prints a string.")],
    code: An[int, Doc("The status code to exit with.")] = 0,
) -> Callable[[], None]:
    """Argument action callable to print something and exit immediately."""

    @wraps(func)
    def _inner() -> None:
        raise cappa.Exit(func() or "", code=code)

    return _inner


def _parse_numbers(value: str, kind: Callable[[str], Any] = float) -> list[Any]:
    """Parse comma-separated numbers."""
    try:
        return [kind(item) for item in value.split(",") if item.strip()]
    except ValueError as error:
        raise DomainError(f"expected comma-separated numbers, got {value!r}", value=value) from error


@dataclass(kw_only=True)
class HelpOption:
    """Reusable class to share a `-h`, `--help` option."""

    help: An[
        bool,
        cappa.Arg(
            short="-h",
            long=True,
            action=cappa.ArgAction.help,
        ),
        Doc("Print the program help and exit."),
    ] = False


@dataclass(kw_only=True)
class RunOptions(HelpOption):
    """Options shared by every computing subcommand."""

    name: ClassVar[str]

    out: An[
        Path | None,
        cappa.Arg(long=True, value_name="DIR"),
        Doc("Output directory. Defaults to `NIBM_OUTPUT_DIR`, or `./nibm-out`."),
    ] = None

    tol: An[
        list[str],
        cappa.Arg(long=True, action=cappa.ArgAction.append, value_name="NAME=VALUE"),
        Doc("Override a tolerance, for example `--tol bp=1e-7`. Repeatable."),
    ] = field(default_factory=list)

    threads: An[
        int,
        cappa.Arg(long=True),
        Doc("Number of worker threads."),
    ] = 1

    log_level: An[
        str,
        cappa.Arg(long=True, choices=("DEBUG", "INFO", "WARNING", "ERROR")),
        Doc("Logging level."),
    ] = "INFO"

    def _argv(self) -> list[str]:
        argv = [self.name]
        for option in fields(self):
            if option.name in {"help", "out"}:
                continue
            value = getattr(self, option.name)
            flag = f"--{option.name.replace('_', '-')}"
            if value is None or value is False:
                continue
            if value is True:
                argv.append(flag)
            elif isinstance(value, list):
                for item in value:
                    argv.append(f"{flag}={item}")
            elif isinstance(value, float):
                argv.append(f"{flag}={value:.17g}")
            else:
                argv.append(f"{flag}={value}")
        return argv

    def _params(self) -> dict[str, Any]:
        return {}

    def _seed(self) -> int | None:
        return None

    def execute(self, tol: Tolerances, directory: Path) -> list[Path]:
        """Compute and write the outputs of the subcommand."""
        raise NotImplementedError

    def __call__(self) -> Any:  # noqa: D102
        logging.getLogger().setLevel(self.log_level)
        try:
            if self.threads < 1:
                raise DomainError(f"expected at least one worker thread, got {self.threads}", threads=self.threads)
            tol = resolve_tolerances(self.tol)
            directory = self.out or default_output_dir()
            manifest = RunManifest(
                subcommand=self.name,
                argv=self._argv(),
                params=self._params(),
                seed=self._seed(),
                version=debug.get_version(),
                tolerances=tol.as_dict(),
            )
            for path in self.execute(tol, directory):
                manifest.record(path)
            manifest.save(directory)
        except NibmError as error:
            print(json.dumps(error.as_dict(), sort_keys=True, default=str))
            raise cappa.Exit(code=error.exit_code) from error
        logger.info(f"{self.name}: wrote {len(manifest.outputs)} files to {directory}")
        return 0


@dataclass(kw_only=True)
class ModelOptions(RunOptions):
    """Options selecting the model parameters."""

    a: An[float, cappa.Arg(long=True), Doc("Start-point offset.")]
    b: An[float, cappa.Arg(long=True), Doc("End-point offset.")]
    t: An[float, cappa.Arg(long=True), Doc("Observation time, in (0, 1).")] = 0.5

    def _params(self) -> dict[str, Any]:
        return {"a": self.a, "b": self.b, "t": self.t}

    def model(self, tol: Tolerances, n: int | None = None) -> ModelParams:
        """Build the model parameters."""
        return ModelParams(self.a, self.b, self.t, n, tol=tol)


def _parse_segment(value: str) -> tuple[complex, complex, int]:
    parts = _parse_numbers(value)
    if len(parts) != 5 or parts[4] < 2 or parts[4] != int(parts[4]):  # noqa: PLR2004
        raise DomainError(f"expected X0,Y0,X1,Y1,COUNT, got {value!r}", segment=value)
    return complex(parts[0], parts[1]), complex(parts[2], parts[3]), int(parts[4])


@cappa.command(
    name="curve",
    help="Compute the branch points and sample the branches of the spectral curve.",
    description=cleandoc(
        """
        Write the branch points, the regime and the critical times to `curve.json`,
        and the four labelled branches along segments of the complex plane to `xi.csv`.
        The default segment is horizontal, at height `2 z3`, from `-2 z1` to `2 z1`.
        """,
    ),
)
@dataclass(kw_only=True)
class CommandCurve(ModelOptions):
    """Command to inspect the spectral curve."""

    name: ClassVar[str] = "curve"

    segment: An[
        list[str],
        cappa.Arg(long=True, action=cappa.ArgAction.append, value_name="X0,Y0,X1,Y1,COUNT"),
        Doc("A segment along which branches are sampled. Repeatable."),
    ] = field(default_factory=list)

    def execute(self, tol: Tolerances, directory: Path) -> list[Path]:  # noqa: D102
        params = self.model(tol)
        curve = spectral_curve(params)
        branch = curve.branch
        segments = [_parse_segment(item) for item in self.segment] or [
            (complex(-2 * branch.z1, 2 * branch.z3), complex(2 * branch.z1, 2 * branch.z3), 41),
        ]
        rows = []
        for index, (start, end, count) in enumerate(segments):
            points = [start + (end - start) * k / (count - 1) for k in range(count)]
            frame = curve.frame(points[0])
            values = curve.follow(points[0], np.asarray(frame.xi), points)
            for point, xi in zip(points, values, strict=True):
                residual = float(np.max(curve.residual(xi, point)))
                parts = [part for value in xi for part in (value.real, value.imag)]
                rows.append((index, point.real, point.imag, *parts, residual))
        summary: dict[str, Any] = {
            "params": params.as_dict(),
            "branch_points": branch.as_dict(),
            "discriminant": discriminant_coefficients(params).p1,
            "hub": curve.hub,
        }
        if params.subcritical:
            summary["t_c1"], summary["t_c2"] = critical_times(params.a, params.b)
        header = ["segment", "re_z", "im_z"] + [f"{part}_xi{sheet}" for sheet in range(1, 5) for part in ("re", "im")]
        return [
            write_json(directory / "curve.json", summary),
            write_csv(directory / "xi.csv", [*header, "residual"], rows),
        ]


@cappa.command(
    name="density",
    help="Compute the limiting mean density and the rescaling function.",
    description=cleandoc(
        """
        Write the density and the rescaling function on Clenshaw-Curtis nodes
        of the support to `density.csv`, and the support, edge constants and mass
        to `density.json`.
        """,
    ),
)
@dataclass(kw_only=True)
class CommandDensity(ModelOptions):
    """Command to compute the density."""

    name: ClassVar[str] = "density"

    nodes: An[int, cappa.Arg(long=True), Doc("Clenshaw-Curtis panels per support interval.")] = 2048
    check_edges: An[bool, cappa.Arg(long=True), Doc("Fit the square-root behavior at every real edge.")] = False

    def execute(self, tol: Tolerances, directory: Path) -> list[Path]:  # noqa: D102
        params = self.model(tol)
        profile = density_profile(params, GridSpec(nodes=self.nodes, threads=self.threads))
        summary = {"params": params.as_dict(), **profile.summary()}
        if self.check_edges:
            edges = ["z1", "-z1"]
            if spectral_curve(params).branch.regime is Regime.TWO_CUTS:
                edges += ["z2", "-z2"]
            summary["edges"] = {
                edge: {
                    "constant": fit.constant,
                    "exponent": fit.exponent,
                    "expansion_constant": fit.expansion_constant,
                    "agreement": fit.agreement,
                }
                for edge in edges
                for fit in [edge_fit(edge, params)]
            }
        rows = zip(profile.grid, profile.rho, profile.h_grid, strict=True)
        return [
            write_csv(directory / "density.csv", ["x", "rho", "h"], rows),
            write_json(directory / "density.json", summary),
        ]


@cappa.command(
    name="kernel",
    help="Evaluate the finite-n kernel and compare it with its scaling limits.",
    description=cleandoc(
        """
        Modes:

        - `diag`: finite-n density `K(x,x)/n` against the limiting density;
        - `bulk`: sine-kernel comparison at `--x0` along `--n-list`;
        - `edge`: Airy-kernel comparison at `--edge` along `--n-list`;
        - `check`: trace, reproducing-property and biorthogonality residuals.
        """,
    ),
)
@dataclass(kw_only=True)
class CommandKernel(ModelOptions):
    """Command to evaluate the kernel."""

    name: ClassVar[str] = "kernel"

    n: An[int, cappa.Arg(long=True), Doc("Number of paths (modes `diag` and `check`).")] = 8
    precision: An[int | None, cappa.Arg(long=True), Doc("Significand bits of the multiprecision arithmetic.")] = None
    mode: An[str, cappa.Arg(long=True, choices=("diag", "bulk", "edge", "check")), Doc("What to compute.")] = "check"
    x0: An[
        float | None,
        cappa.Arg(long=True),
        Doc("Bulk point, the middle of the right support interval by default."),
    ] = None
    edge: An[str, cappa.Arg(long=True, choices=("z1", "z2", "-z1", "-z2")), Doc("Edge of the Airy comparison.")] = "z1"
    n_list: An[str, cappa.Arg(long=True), Doc("Comma-separated numbers of paths of the scaling sweep.")] = "16,32,64"
    span: An[float, cappa.Arg(long=True), Doc("Scaled coordinates range over `[-span, span]`.")] = 1.0
    steps: An[int, cappa.Arg(long=True), Doc("Scaled coordinates per axis.")] = 5
    points: An[int, cappa.Arg(long=True), Doc("Grid points of the `diag` mode.")] = 41

    def _params(self) -> dict[str, Any]:
        return {**super()._params(), "n": self.n}

    def execute(self, tol: Tolerances, directory: Path) -> list[Path]:  # noqa: D102
        params = self.model(tol, self.n)
        branch = spectral_curve(params).branch
        if self.mode in {"bulk", "edge"}:
            n_list = _parse_numbers(self.n_list, int)
            axis = np.linspace(-self.span, self.span, self.steps)
            grid = [(float(u), float(v)) for u in axis for v in axis]
            if self.mode == "bulk":
                inner = branch.z2 if branch.regime is Regime.TWO_CUTS else 0.0
                x0 = self.x0 if self.x0 is not None else (branch.z1 + inner) / 2
                report = bulk_scaling_check(x0, n_list, grid, params, self.precision, self.threads)
            else:
                report = edge_scaling_check(self.edge, n_list, grid, params, self.precision, self.threads)
            return [
                write_json(directory / "scaling.json", report.as_dict()),
                write_csv(directory / "scaling.csv", ["n", "u", "v", "measured", "reference"], report.rows),
            ]
        system = biorthogonal_system(params, self.precision)
        if self.mode == "diag":
            xs = np.linspace(-branch.z1, branch.z1, self.points)
            finite = diagonal_density(xs, system, self.threads)
            limit = np.array([density_at(float(x), params) for x in xs])
            abs_errors = np.abs(finite - limit)
            edges = [edge for interval in branch.support for edge in interval]
            bulk = np.array([min(abs(x - edge) for edge in edges) > 0.1 for x in xs])  # noqa: PLR2004
            inside = np.array([any(low < x < high for low, high in branch.support) for x in xs])
            summary = {
                "params": params.as_dict(),
                "precision_bits": system.precision_bits,
                "sup_bulk_error": float(np.max(abs_errors[bulk & inside])) if np.any(bulk & inside) else math.nan,
            }
            return [
                write_csv(
                    directory / "kernel_diag.csv",
                    ["x", "k_over_n", "rho", "abs_err"],
                    zip(xs, finite, limit, abs_errors, strict=True),
                ),
                write_json(directory / "kernel_diag.json", summary),
            ]
        trace = trace_check(system, self.threads)
        probes = list(np.linspace(-branch.z1, branch.z1, 5))
        summary = {
            "params": params.as_dict(),
            "precision_bits": system.precision_bits,
            "trace": trace,
            "trace_error": abs(trace - self.n),
            "reproducing_residual": reproducing_check(system, probes, probes, self.threads),
            "gram_residual": gram_residual(system),
        }
        return [write_json(directory / "check.json", summary)]


@cappa.command(
    name="simulate",
    help="Sample non-intersecting Brownian bridges.",
    description=cleandoc(
        """
        Write accepted bundles as polylines to `paths.csv`, the histogram of the
        positions at time `--t` to `histogram.csv`, and the acceptance statistics
        to `simulate.json`. The critical separation `a * b = 1/2` is accepted here.
        """,
    ),
)
@dataclass(kw_only=True)
class CommandSimulate(RunOptions):
    """Command to sample path ensembles."""

    name: ClassVar[str] = "simulate"

    a: An[float, cappa.Arg(long=True), Doc("Start-point offset.")]
    b: An[float, cappa.Arg(long=True), Doc("End-point offset.")]
    t: An[float, cappa.Arg(long=True), Doc("Time of the histogram.")] = 0.5
    n: An[int, cappa.Arg(long=True), Doc("Number of paths (even, at most 8).")] = 4
    steps: An[int, cappa.Arg(long=True), Doc("Number of time steps.")] = 500
    count: An[int, cappa.Arg(long=True), Doc("Number of bundles to keep.")] = 100
    seed: An[int, cappa.Arg(long=True), Doc("Seed of the random streams.")] = 0
    bins: An[int, cappa.Arg(long=True), Doc("Number of histogram bins.")] = 50

    def _params(self) -> dict[str, Any]:
        return {"a": self.a, "b": self.b, "t": self.t, "n": self.n}

    def _seed(self) -> int | None:
        return self.seed

    def execute(self, tol: Tolerances, directory: Path) -> list[Path]:  # noqa: D102
        ensemble = figure_paths(self.a, self.b, self.n, self.steps, self.count, self.seed, self.threads)
        histogram = marginal_histogram(ensemble, self.t, self.bins)
        rows = zip(histogram.edges[:-1], histogram.edges[1:], histogram.mass, strict=True)
        return [
            write_csv(directory / "paths.csv", ["bundle_id", "path_id", "time", "position"], polyline_rows(ensemble)),
            write_csv(directory / "histogram.csv", ["bin_left", "bin_right", "mass"], rows),
            write_json(directory / "simulate.json", {**ensemble.metadata(), "t": histogram.t}),
        ]


@cappa.command(
    name="phase",
    help="Sweep the time and sample the level set of the primitives.",
    description=cleandoc(
        """
        Write the branch points and the regime along a sweep of times to `phase.csv`,
        and `Re(lambda_3 - lambda_4)` on a complex grid at `--level-t` to `level.csv`.
        """,
    ),
)
@dataclass(kw_only=True)
class CommandPhase(RunOptions):
    """Command to sweep the phase diagram."""

    name: ClassVar[str] = "phase"

    a: An[float, cappa.Arg(long=True), Doc("Start-point offset.")]
    b: An[float, cappa.Arg(long=True), Doc("End-point offset.")]
    t_grid: An[str, cappa.Arg(long=True, value_name="START,STOP,COUNT"), Doc("Times of the sweep.")] = "0.01,0.99,99"
    level_t: An[float, cappa.Arg(long=True), Doc("Time of the level-set grid.")] = 0.05
    level_size: An[int, cappa.Arg(long=True), Doc("Points per axis of the level-set grid.")] = 31

    def _params(self) -> dict[str, Any]:
        return {"a": self.a, "b": self.b, "t": self.level_t}

    def execute(self, tol: Tolerances, directory: Path) -> list[Path]:  # noqa: D102
        parts = _parse_numbers(self.t_grid)
        if len(parts) != 3 or parts[2] < 1 or parts[2] != int(parts[2]):  # noqa: PLR2004
            raise DomainError(f"expected START,STOP,COUNT, got {self.t_grid!r}", t_grid=self.t_grid)
        ts = np.linspace(parts[0], parts[1], int(parts[2]))
        sweep = sweep_branch_points(self.a, self.b, ts, tol)
        rows = []
        for t, branch in zip(ts, sweep, strict=True):
            if branch is None:
                rows.append((t, math.nan, math.nan, math.nan, "critical"))
            else:
                z2 = branch.z2 if branch.regime is Regime.TWO_CUTS else 0.0
                rows.append((t, branch.z1, z2, branch.z3, branch.regime.value))
        params = ModelParams(self.a, self.b, self.level_t, tol=tol)
        branch = spectral_curve(params).branch
        extent = 1.5 * max(branch.z1, branch.z3)
        axis = np.linspace(-extent, extent, self.level_size)
        values = lambda_grid(axis, axis, params)
        level = [(x, y, values[i, j]) for i, y in enumerate(axis) for j, x in enumerate(axis)]
        summary: dict[str, Any] = {"a": self.a, "b": self.b, "level_t": self.level_t}
        if params.subcritical:
            summary["t_c1"], summary["t_c2"] = critical_times(self.a, self.b)
        return [
            write_csv(directory / "phase.csv", ["t", "z1", "z2", "z3", "regime"], rows),
            write_csv(directory / "level.csv", ["x", "y", "re_lambda3_minus_lambda4"], level),
            write_json(directory / "phase.json", summary),
        ]


@cappa.command(
    name="replay",
    help="Re-run a recorded run and compare its outputs.",
    description=cleandoc(
        """
        Read a run manifest, execute the same subcommand into a fresh directory,
        and compare the content digests of all outputs. Exit with status 1 on any difference.
        """,
    ),
)
@dataclass(kw_only=True)
class CommandReplay(HelpOption):
    """Command to replay a run."""

    manifest: An[Path, cappa.Arg(), Doc("Manifest file, or the output directory containing it.")]

    out: An[
        Path | None,
        cappa.Arg(long=True, value_name="DIR"),
        Doc("Directory of the replayed run. A temporary directory by default."),
    ] = None

    def __call__(self) -> Any:  # noqa: D102
        try:
            recorded = RunManifest.load(self.manifest)
        except NibmError as error:
            print(json.dumps(error.as_dict(), sort_keys=True, default=str))
            raise cappa.Exit(code=error.exit_code) from error
        fresh = self.out or Path(tempfile.mkdtemp(prefix="nibm-replay-"))
        argv = [*recorded.argv, f"--out={fresh}"]
        logger.info(f"replaying: {NAME} {' '.join(argv)}")
        command = cappa.parse(CommandMain, argv=argv, backend=cappa.backend, help=False, completion=False)
        command.subcommand()
        replayed = RunManifest.load(fresh)
        differences = recorded.differences(replayed)
        if differences:
            error = {"code": "replay-mismatch", "message": "outputs differ", "params": {"files": differences}}
            print(json.dumps(error, sort_keys=True))
            raise cappa.Exit(code=1)
        logger.info(f"replay of {recorded.subcommand} matches: {len(recorded.outputs)} files")
        return 0


@cappa.command(
    name=NAME,
    help="Numerical laboratory for non-intersecting Brownian motions with two starting and two ending points.",
    description=cleandoc(
        """
        This tool computes the spectral curve, the limiting mean density and the
        exact finite-n correlation kernel of `n` non-intersecting Brownian motions,
        half of them going from `a` to `b` and half from `-a` to `-b`,
        and samples such paths.

        Every computing subcommand writes its outputs and a `manifest.json`
        to the output directory; `replay` reproduces a run from its manifest.

        Errors are printed as a JSON object `{code, message, params}` and the exit
        status is 2 for invalid parameters, 3 for numerical failures and 4 for
        infeasible sampling.
        """,
    ),
)
@dataclass(kw_only=True)
class CommandMain(HelpOption):
    """Command to run the numerical laboratory."""

    subcommand: An[
        cappa.Subcommands[
            CommandCurve | CommandDensity | CommandKernel | CommandSimulate | CommandPhase | CommandReplay
        ],
        Doc("The selected subcommand."),
    ]

    version: An[
        bool,
        cappa.Arg(
            short="-V",
            long=True,
            action=print_and_exit(debug.get_version),
            num_args=0,
            help="Print the program version and exit.",
        ),
    ] = False

    debug_info: An[
        bool,
        cappa.Arg(long=True, action=print_and_exit(debug.print_debug_info), num_args=0),
        Doc("Print debug information."),
    ] = False

    completion: An[
        bool,
        cappa.Arg(
            long=True,
            action=cappa.ArgAction.completion,
            choices=("complete", "generate"),
            help="Print shell-specific completion source.",
        ),
    ] = False


def main(
    args: An[list[str] | None, Doc("Arguments passed from the command line.")] = None,
) -> An[int, Doc("An exit code.")]:
    """Run the main program.

    This function is executed when you type `nibm` or `python -m nibm`.
    """
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    output = cappa.Output(error_format=f"[bold]{NAME}[/]: [bold red]error[/]: {{message}}")
    return cappa.invoke(CommandMain, argv=args, output=output, backend=cappa.backend, completion=False, help=False)
