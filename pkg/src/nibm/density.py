"""Limiting mean density of the paths, its edges, and the rescaling function `h`."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.polynomial import chebyshev
from scipy import fft

from nibm.curve import ModelParams, Regime, SpectralCurve, branch_expansion, spectral_curve
from nibm.errors import DomainError, EdgeFitError

logger = logging.getLogger(__name__)

DensityMethod = Literal["sheet", "roots"]

_EDGE_DISTANCES = np.logspace(-6, -3, 13)


@dataclass(frozen=True)
class GridSpec:
    """Sampling of the support."""

    nodes: int = 2048
    """Clenshaw-Curtis panels per support interval (the grid has one more node)."""
    threads: int = 1
    """Worker threads used for the boundary-value sweeps."""

    def __post_init__(self) -> None:
        if self.nodes < 4 or self.nodes % 2:
            raise DomainError("the number of nodes must be an even integer >= 4", nodes=self.nodes)
        if self.threads < 1:
            raise DomainError("the number of threads must be positive", threads=self.threads)


@dataclass(frozen=True)
class EdgeFit:
    """Square-root fit of the density at a real edge."""

    edge: str
    constant: float
    """Constant `c` such that `rho(x) ~ (c / pi) |x - edge|^(1/2)`."""
    exponent: float
    """Fitted exponent, close to one half."""
    expansion_constant: float
    """The same constant, read from the coalescing branches outside the support."""

    @property
    def agreement(self) -> float:
        """Relative difference between the two estimates of the constant."""
        return abs(self.constant - self.expansion_constant) / self.expansion_constant


@dataclass(frozen=True, eq=False)
class DensityProfile:
    """Density sampled on Clenshaw-Curtis nodes of its support."""

    params: ModelParams
    support: tuple[tuple[float, float], ...]
    grid: np.ndarray
    """Nodes, ascending. Support endpoints are included."""
    rho: np.ndarray
    """Density at the nodes."""
    weights: np.ndarray
    """Clenshaw-Curtis weights of the nodes."""
    c1: float
    """Edge constant at `z1`."""
    c2: float | None
    """Edge constant at `z2`, `None` in the OneCut regime."""
    h_grid: np.ndarray
    """Rescaling function at the nodes."""
    experimental: bool = False
    """Whether the parameters lie outside the validated regime `a * b < 1/2`."""

    @property
    def mass(self) -> float:
        """Total mass of the density."""
        return float(self.weights @ self.rho)

    @property
    def symmetry_error(self) -> float:
        """Largest difference between `rho(x)` and `rho(-x)` on the (symmetric) grid."""
        return float(np.max(np.abs(self.rho - self.rho[::-1])))

    def summary(self) -> dict[str, object]:
        """Return a JSON-ready summary."""
        return {
            "support": [list(interval) for interval in self.support],
            "regime": spectral_curve(self.params).branch.regime.value,
            "c1": self.c1,
            "c2": self.c2,
            "mass": self.mass,
            "symmetry_error": self.symmetry_error,
            "nodes": int(self.grid.size),
            "experimental": self.experimental,
        }


def clenshaw_curtis(panels: int) -> tuple[np.ndarray, np.ndarray]:
    """Clenshaw-Curtis nodes and weights on `[-1, 1]`.

    Parameters:
        panels: Even number of panels `N`; the rule has `N + 1` nodes.

    Returns:
        Ascending nodes, exactly symmetric, and their weights.
    """
    k = np.arange(panels + 1)
    nodes = np.cos(np.pi * k / panels)
    nodes = (nodes - nodes[::-1]) / 2
    nodes[panels // 2] = 0.0
    j = np.arange(1, panels // 2 + 1)
    b = np.full(j.size, 2.0)
    b[-1] = 1.0
    c = np.full(panels + 1, 2.0)
    c[[0, -1]] = 1.0
    series = (b / (4 * j * j - 1)) @ np.cos(2 * np.outer(j, k) * np.pi / panels)
    weights = c / panels * (1 - series)
    return nodes[::-1].copy(), weights[::-1].copy()


def _in_support(x: float, curve: SpectralCurve) -> bool:
    return any(low <= x <= high for low, high in curve.branch.support)


def _roots_density(x: float, curve: SpectralCurve) -> float:
    roots = curve.roots(complex(x))
    imag = float(np.max(roots.imag))
    if imag <= curve.params.tol.classify * max(1.0, float(np.max(np.abs(roots)))):
        return 0.0
    return imag / math.pi


def _sheet_sweep(curve: SpectralCurve, xs: np.ndarray, threads: int) -> np.ndarray:
    # Boundary values from above; chunks are independent continuations.
    if xs.size == 0:
        return np.empty((0, 4), dtype=complex)
    chunks = [chunk for chunk in np.array_split(xs, min(threads, xs.size)) if chunk.size]
    if len(chunks) == 1:
        return curve.boundary_values(xs, side=1)
    with ThreadPoolExecutor(max_workers=threads) as executor:
        parts = list(executor.map(lambda chunk: curve.boundary_values(chunk, side=1), chunks))
    return np.concatenate(parts)


def _density_from_sheets(values: np.ndarray, xs: np.ndarray, curve: SpectralCurve) -> np.ndarray:
    imag = np.where(xs > 0, values[:, 0].imag, values[:, 1].imag)
    threshold = curve.params.tol.classify * np.maximum(1.0, np.max(np.abs(values), axis=1))
    return np.where(imag > threshold, imag, 0.0) / math.pi


def density_at(x: float, params: ModelParams, method: DensityMethod = "sheet") -> float:
    """Limiting mean density at a point.

    Parameters:
        x: The point.
        params: Model parameters.
        method: `sheet` reads `Im xi_1+` (or `Im xi_2+` for negative `x`) from boundary values,
            `roots` takes the largest imaginary part among the unlabelled roots.

    Returns:
        The density, zero off the support.
    """
    curve = spectral_curve(params)
    if not _in_support(x, curve):
        return 0.0
    edges = [edge for interval in curve.branch.support for edge in interval]
    distance = min(abs(x - edge) for edge in edges)
    if distance <= params.tol.bp * max(1.0, curve.branch.z1):
        logger.warning(f"density at {x} is within {distance:.3g} of an edge: low accuracy")
        if distance == 0:
            return 0.0
    if method == "roots" or x == 0:
        return _roots_density(x, curve)
    values = curve.boundary_values([x], side=1)
    return float(_density_from_sheets(values, np.array([x]), curve)[0])


def edge_fit(edge: str, params: ModelParams) -> EdgeFit:
    """Fit the square-root vanishing of the density at a real edge.

    Parameters:
        edge: One of `z1`, `z2`, `-z1`, `-z2`.
        params: Model parameters.

    Raises:
        DomainError: When the edge does not exist in the current regime.
        EdgeFitError: When the fitted exponent is not one half.

    Returns:
        The fit.
    """
    curve = spectral_curve(params)
    branch = curve.branch
    if edge.lstrip("-") == "z2" and branch.regime is not Regime.TWO_CUTS:
        raise DomainError(f"{edge} is not a real edge in the OneCut regime", edge=edge, **params.as_dict())
    position = {"z1": branch.z1, "z2": branch.z2, "-z1": -branch.z1, "-z2": -branch.z2}.get(edge)
    if position is None:
        raise DomainError(f"unknown edge {edge!r}", edge=edge)
    inward = -1.0 if edge in ("z1", "-z2") else 1.0
    distances = _EDGE_DISTANCES * branch.z1
    rho = np.array([_roots_density(position + inward * d, curve) for d in distances])
    if np.any(rho <= 0):
        raise EdgeFitError(f"density vanishes inside the support near {edge}", edge=edge, **params.as_dict())
    exponent, _ = np.polyfit(np.log(distances), np.log(rho), 1)
    if abs(exponent - 0.5) > params.tol.edge_band:
        raise EdgeFitError(
            f"fitted exponent {exponent:.4f} at {edge} is not 1/2",
            edge=edge,
            exponent=float(exponent),
            **params.as_dict(),
        )
    smallest = slice(0, 5)
    ratios = rho[smallest] / np.sqrt(distances[smallest])
    _, intercept = np.polyfit(distances[smallest], ratios, 1)
    expansion = branch_expansion(edge, params)
    fit = EdgeFit(
        edge=edge,
        constant=float(math.pi * intercept),
        exponent=float(exponent),
        expansion_constant=expansion.coefficient,
    )
    logger.debug(f"edge {edge}: exponent {fit.exponent:.6f}, c={fit.constant:.10g}, agreement {fit.agreement:.2e}")
    return fit


def edge_constant(edge: str, params: ModelParams) -> float:
    """Constant `c` with `rho(x) ~ (c / pi) |x - edge|^(1/2)` at a real edge."""
    return edge_fit(edge, params).constant


def h_function(x: float, params: ModelParams) -> float:
    """Rescaling function `h(x) = (Re lambda_1+ + Re lambda_3+) / 2 - x^2 / (2 (1 - t))`.

    Negative points use the mirror `h(-x)`. At the origin (OneCut) the value
    is taken just beside it.

    Parameters:
        x: A point of the open support.
        params: Model parameters.

    Raises:
        DomainError: When `x` is not in the open support.

    Returns:
        The value of `h`.
    """
    curve = spectral_curve(params)
    edges = [edge for interval in curve.branch.support for edge in interval]
    if not _in_support(x, curve) or x in edges:
        raise DomainError(f"h is defined on the open support only, got x={x}", x=x, **params.as_dict())
    x = abs(x) or 10 * params.tol.bp * max(1.0, curve.branch.z1)
    values = curve.lambda_values(complex(x), side=1)
    return 0.5 * (values[0].real + values[2].real) - x * x / (2 * (1 - params.t))


def h_extended(x: float, params: ModelParams) -> float:
    """The rescaling function extended by zero off the open support."""
    curve = spectral_curve(params)
    if not _in_support(x, curve) or any(x in interval for interval in curve.branch.support):
        return 0.0
    return h_function(x, params)


def _antiderivative(values: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    # Chebyshev interpolant on ascending Clenshaw-Curtis nodes, integrated in the node variable.
    panels = values.size - 1
    coefficients = fft.dct(values[::-1], type=1) / panels
    coefficients[[0, -1]] /= 2
    return chebyshev.chebval(nodes, chebyshev.chebint(coefficients))


def _h_on_interval(
    curve: SpectralCurve,
    nodes: np.ndarray,
    low: float,
    high: float,
    slope: np.ndarray,
) -> np.ndarray:
    half = (high - low) / 2
    primitive = half * _antiderivative(slope, nodes)
    xs = low + half * (nodes + 1)
    reference = int(np.argmin(np.abs(xs - (max(low, 0.0) + high) / 2)))
    anchor = h_function(float(xs[reference]), curve.params)
    return anchor + primitive - primitive[reference]


def density_profile(params: ModelParams, grid_spec: GridSpec | None = None) -> DensityProfile:
    """Sample the density and the rescaling function on the support.

    Each support interval carries Clenshaw-Curtis nodes, so that the mass is
    integrated with the matching weights. The left interval of a TwoCuts
    support is the exact mirror of the right one. The rescaling function is
    anchored at one node by the primitives of the curve and propagated by
    spectral integration of its derivative `Re xi_1+(x) - x / (1 - t)`.

    Parameters:
        params: Model parameters.
        grid_spec: Grid options.

    Returns:
        The profile.
    """
    grid_spec = grid_spec or GridSpec()
    curve = spectral_curve(params)
    branch = curve.branch
    experimental = not params.subcritical
    if experimental:
        logger.warning(f"a*b={params.a * params.b:.4g} > 1/2: density output is experimental")
    nodes, weights = clenshaw_curtis(grid_spec.nodes)
    scale = 1 / (1 - params.t)
    if branch.regime is Regime.TWO_CUTS:
        low, high = branch.z2, branch.z1
        half = (high - low) / 2
        right = low + half * (nodes + 1)
        right[0], right[-1] = low, high
        values = _sheet_sweep(curve, right[1:-1], grid_spec.threads)
        left_values = _sheet_sweep(curve, -right[-2:0:-1], grid_spec.threads)
        rho_right = np.concatenate([[0.0], _density_from_sheets(values, right[1:-1], curve), [0.0]])
        rho_left = np.concatenate([[0.0], _density_from_sheets(left_values, -right[-2:0:-1], curve), [0.0]])
        inner, outer = branch_expansion("z2", params), branch_expansion("z1", params)
        slope = np.concatenate([[inner.value], values[:, 0].real, [outer.value]]) - right * scale
        h_right = _h_on_interval(curve, nodes, low, high, slope)
        grid = np.concatenate([-right[::-1], right])
        rho = np.concatenate([rho_left, rho_right])
        h_grid = np.concatenate([h_right[::-1], h_right])
        all_weights = np.concatenate([weights[::-1], weights]) * half
        c2: float | None = edge_constant("z2", params)
    else:
        z1 = branch.z1
        grid = z1 * nodes
        middle = grid_spec.nodes // 2
        grid[0], grid[-1], grid[middle] = -z1, z1, 0.0
        positive = grid[middle + 1 : -1]
        values = _sheet_sweep(curve, positive, grid_spec.threads)
        left_values = _sheet_sweep(curve, -positive[::-1], grid_spec.threads)
        rho = np.concatenate(
            [
                [0.0],
                _density_from_sheets(left_values, -positive[::-1], curve),
                [_roots_density(0.0, curve)],
                _density_from_sheets(values, positive, curve),
                [0.0],
            ],
        )
        outer = branch_expansion("z1", params)
        half_slope = np.concatenate([values[:, 0].real, [outer.value]]) - grid[middle + 1 :] * scale
        slope = np.concatenate([-half_slope[::-1], [0.0], half_slope])
        h_full = _h_on_interval(curve, nodes, -z1, z1, slope)
        h_grid = np.concatenate([h_full[middle:][::-1], h_full[middle + 1 :]])
        all_weights = weights * z1
        c2 = None
    profile = DensityProfile(
        params=params,
        support=branch.support,
        grid=grid,
        rho=rho,
        weights=all_weights,
        c1=edge_constant("z1", params),
        c2=c2,
        h_grid=h_grid,
        experimental=experimental,
    )
    deviation = abs(profile.mass - 1)
    if deviation > params.tol.mass:
        logger.warning(f"density mass deviates from 1 by {deviation:.3g}")
    logger.info(f"density profile: {branch.regime.value}, {grid.size} nodes, mass {profile.mass:.12f}")
    return profile


def mass(profile: DensityProfile) -> float:
    """Clenshaw-Curtis integral of the density."""
    return profile.mass
