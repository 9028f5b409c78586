"""Spectral curve of two groups of non-intersecting Brownian motions.

The curve is the quartic equation in `xi` whose four solutions
`xi_1(z), ..., xi_4(z)` encode the limiting density of the paths at time `t`.
This module solves the quartic, labels its roots by analytic continuation from
infinity, locates the branch points, and integrates the branches along paths
(periods and primitives).
"""

from __future__ import annotations

import cmath
import enum
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache
from typing import Callable, NamedTuple, Sequence

import mpmath
import numpy as np
from scipy.optimize import linear_sum_assignment

from nibm.config import DEFAULT_TOLERANCES, Tolerances
from nibm.errors import (
    ClassificationError,
    CriticalSeparationError,
    CriticalTimeError,
    DomainError,
    PathError,
    PoleError,
)

logger = logging.getLogger(__name__)

SHEETS = (1, 2, 3, 4)
"""Sheet indices."""

_COARSE_RULE = np.polynomial.legendre.leggauss(8)
_FINE_RULE = np.polynomial.legendre.leggauss(16)
_DISCRIMINANT_DPS = 120
_MIN_PANEL = 1e-10
_MIN_STEP = 1e-12
_SMALL_ROOT = 1e-3

Integrand = Callable[[np.ndarray, np.ndarray], np.ndarray]


class Regime(str, enum.Enum):
    """Shape of the support of the limiting density."""

    TWO_CUTS = "TwoCuts"
    """The two groups of paths are separated: two intervals."""
    ONE_CUT = "OneCut"
    """The groups have merged: one interval."""


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the ensemble: `n/2` paths from `a` to `b` and `n/2` from `-a` to `-b`."""

    a: float
    """Start-point offset."""
    b: float
    """End-point offset."""
    t: float
    """Observation time, in `(0, 1)`."""
    n: int | None = None
    """Number of paths, even. Not needed for curve-only work."""
    tol: Tolerances = field(default=DEFAULT_TOLERANCES, repr=False)
    """Tolerances used by every operation on these parameters."""

    def __post_init__(self) -> None:
        if not (self.a > 0 and self.b > 0):
            raise DomainError("a and b must be positive", **self.as_dict())
        if not 0 < self.t < 1:
            raise DomainError("t must lie in (0, 1)", **self.as_dict())
        if self.n is not None and (self.n <= 0 or self.n % 2):
            raise DomainError("n must be a positive even integer", **self.as_dict())
        if abs(self.a * self.b - 0.5) <= self.tol.crit:
            raise CriticalSeparationError("a * b = 1/2 is a critical separation", **self.as_dict())
        if self.subcritical:
            t_c1, t_c2 = critical_times(self.a, self.b)
            if min(abs(self.t - t_c1), abs(self.t - t_c2)) <= self.tol.crit:
                raise CriticalTimeError(
                    f"t={self.t} is a critical time (t_c1={t_c1:.9g}, t_c2={t_c2:.9g})",
                    **self.as_dict(),
                )

    @property
    def subcritical(self) -> bool:
        """Whether `a * b < 1/2`, the regime where the groups merge and split again."""
        return self.a * self.b < 0.5

    @property
    def variance(self) -> float:
        """Variance `t(1 - t)` of a unit Brownian bridge at time `t`."""
        return self.t * (1 - self.t)

    @property
    def symmetric_time(self) -> float:
        """The time `a / (a + b)`."""
        return self.a / (self.a + self.b)

    def with_n(self, n: int) -> ModelParams:
        """Return the same parameters with another number of paths."""
        return replace(self, n=n)

    def as_dict(self) -> dict[str, float | int | None]:
        """Return the physical parameters as a dictionary."""
        return {"a": self.a, "b": self.b, "t": self.t, "n": self.n}


@dataclass(frozen=True)
class DiscriminantData:
    """Cubic `p1(x) = a3 x^3 + a2 x^2 + a1 x + a0` in `x = z^2` whose roots are the squared branch points."""

    a3: float
    a2: float
    a1: float
    a0: float

    @property
    def p1(self) -> tuple[float, float, float, float]:
        """Coefficients of `p1`, highest degree first."""
        return (self.a3, self.a2, self.a1, self.a0)

    def __call__(self, x: complex) -> complex:
        return ((self.a3 * x + self.a2) * x + self.a1) * x + self.a0


@dataclass(frozen=True)
class BranchPointSet:
    """Branch points of the curve and the regime they imply."""

    z1: float
    """Outer real branch point, the edge of the support."""
    z2: float
    """Inner real branch point (TwoCuts) or smaller imaginary branch point (OneCut)."""
    z3: float
    """Larger imaginary branch point."""
    regime: Regime
    """Regime classification."""
    t_c1: float | None
    """First critical time, `None` when `a * b > 1/2`."""
    t_c2: float | None
    """Second critical time, `None` when `a * b > 1/2`."""
    roots: tuple[float, ...] = ()
    """Roots of the cubic `p1`, descending."""

    @property
    def real_edges(self) -> tuple[float, ...]:
        """Positive real branch points."""
        return (self.z1, self.z2) if self.regime is Regime.TWO_CUTS else (self.z1,)

    @property
    def points(self) -> tuple[complex, ...]:
        """All six branch points."""
        if self.regime is Regime.TWO_CUTS:
            return (self.z1, -self.z1, self.z2, -self.z2, 1j * self.z3, -1j * self.z3)
        return (self.z1, -self.z1, 1j * self.z2, -1j * self.z2, 1j * self.z3, -1j * self.z3)

    @property
    def support(self) -> tuple[tuple[float, float], ...]:
        """Support intervals of the limiting density, ascending."""
        if self.regime is Regime.TWO_CUTS:
            return ((-self.z1, -self.z2), (self.z2, self.z1))
        return ((-self.z1, self.z1),)

    def root_counts(self) -> tuple[int, int]:
        """Number of real and purely imaginary branch points."""
        return (4, 2) if self.regime is Regime.TWO_CUTS else (2, 4)

    def as_dict(self) -> dict[str, object]:
        """Return a JSON-ready dictionary."""
        return {
            "z1": self.z1,
            "z2": self.z2,
            "z3": self.z3,
            "regime": self.regime.value,
            "t_c1": self.t_c1,
            "t_c2": self.t_c2,
            "p1_roots": list(self.roots),
        }


@dataclass(frozen=True)
class XiFrame:
    """The four labelled branches at a point, with their certificates."""

    z: complex
    xi: tuple[complex, complex, complex, complex]
    """Values of `xi_1, ..., xi_4`."""
    labeling_path: str
    """Vertices of the continuation path from the hub."""
    residual: float
    """Largest relative quartic residual."""
    vieta_sum: float
    """Relative error of the sum of the roots."""
    vieta_product: float
    """Relative error of the product of the roots."""

    def __getitem__(self, sheet: int) -> complex:
        return self.xi[sheet - 1]


@dataclass(frozen=True)
class ParametrizationPoint:
    """A point of the curve given by its rational parameter."""

    v: complex
    xi: complex
    z: complex
    sheet_region: int | None
    """Sheet on which the point lies, `None` on the image of the cuts (or when not located)."""
    residual: float


@dataclass(frozen=True)
class BranchExpansion:
    """Local square-root behavior of two coalescing branches at a real branch point."""

    edge: str
    value: float
    """Common value of the two branches at the branch point."""
    coefficient: float
    """Coefficient `c` in `xi_i - xi_j = 2 c sqrt(delta) + O(delta^(3/2))`."""


class Cut(NamedTuple):
    """A straight cut between two branch points."""

    start: complex
    end: complex


def critical_residual(t: float, a: float, b: float) -> float:
    """Return `a^2 (1-t)^2 + b^2 t^2 - t (1-t)`, which vanishes exactly at the critical times."""
    return a * a * (1 - t) ** 2 + b * b * t * t - t * (1 - t)


def critical_times(a: float, b: float) -> tuple[float, float]:
    """Return the two times at which the groups of paths merge and split.

    Parameters:
        a: Start-point offset.
        b: End-point offset.

    Raises:
        DomainError: When `a * b >= 1/2` (no critical time).

    Returns:
        The times `t_c1 < t_c2`.
    """
    if not (a > 0 and b > 0):
        raise DomainError("a and b must be positive", a=a, b=b)
    discriminant = 1 - 4 * a * a * b * b
    if discriminant <= 0:
        raise DomainError("critical times exist only when a * b < 1/2", a=a, b=b)
    root = math.sqrt(discriminant)
    denominator = 2 * (1 + a * a + b * b)
    return (1 + 2 * a * a - root) / denominator, (1 + 2 * a * a + root) / denominator


def symmetric_time_roots(a: float, b: float) -> tuple[float, float]:
    """Return the simple and the double root of `p1` at `t = a / (a + b)`."""
    ab = a * b
    return 4 * ab * (2 * ab + 1) / (a + b) ** 2, -((2 * ab - 1) ** 2) / (4 * (a + b) ** 2)


# Polynomials in z are lists of coefficients, lowest degree first.
def _poly_mul(*factors: list) -> list:
    result = [1]
    for factor in factors:
        product = [0] * (len(result) + len(factor) - 1)
        for i, left in enumerate(result):
            for j, right in enumerate(factor):
                product[i + j] += left * right
        result = product
    return result


def _poly_add(*terms: tuple[int, list]) -> list:
    size = max(len(poly) for _, poly in terms)
    total = [0] * size
    for weight, poly in terms:
        for i, coefficient in enumerate(poly):
            total[i] += weight * coefficient
    return total


@lru_cache(maxsize=None)
def _context(dps: int) -> mpmath.ctx_mp.MPContext:
    ctx = mpmath.MPContext()
    ctx.dps = dps
    return ctx


def discriminant_coefficients(params: ModelParams) -> DiscriminantData:
    """Compute the cubic whose roots are the squared branch points.

    The discriminant of the quartic in `xi` is a polynomial in `z` with a
    factor `z^2`; the remaining even sextic is a cubic in `x = z^2`,
    normalized so that its leading coefficient is `16 a^2 b^2`.
    The expansion runs in high-precision arithmetic.

    Parameters:
        params: Model parameters.

    Returns:
        The cubic coefficients.
    """
    ctx = _context(_DISCRIMINANT_DPS)
    a, b, t = ctx.mpf(params.a), ctx.mpf(params.b), ctx.mpf(params.t)
    var = t * (1 - t)
    big_b = [0, -2 / var]
    big_c = [-a * a / t**2 - b * b / (1 - t) ** 2 + 1 / var, 0, 1 / var**2]
    big_d = [0, 2 * b * b / (t * (1 - t) ** 3) - 1 / var**2]
    big_e = [0, 0, -b * b / (t**2 * (1 - t) ** 4)]
    m = _poly_mul
    delta = _poly_add(
        (256, m(big_e, big_e, big_e)),
        (-192, m(big_b, big_d, big_e, big_e)),
        (-128, m(big_c, big_c, big_e, big_e)),
        (144, m(big_c, big_d, big_d, big_e)),
        (-27, m(big_d, big_d, big_d, big_d)),
        (144, m(big_b, big_b, big_c, big_e, big_e)),
        (-6, m(big_b, big_b, big_d, big_d, big_e)),
        (-80, m(big_b, big_c, big_c, big_d, big_e)),
        (18, m(big_b, big_c, big_d, big_d, big_d)),
        (16, m(big_c, big_c, big_c, big_c, big_e)),
        (-4, m(big_c, big_c, big_c, big_d, big_d)),
        (-27, m(big_b, big_b, big_b, big_b, big_e, big_e)),
        (18, m(big_b, big_b, big_b, big_c, big_d, big_e)),
        (-4, m(big_b, big_b, big_b, big_d, big_d, big_d)),
        (-4, m(big_b, big_b, big_c, big_c, big_c, big_e)),
        (1, m(big_b, big_b, big_c, big_c, big_d, big_d)),
    )
    delta += [0] * (9 - len(delta))
    scale = 16 * a * a * b * b / delta[8]
    return DiscriminantData(
        a3=float(16 * a * a * b * b),
        a2=float(scale * delta[6]),
        a1=float(scale * delta[4]),
        a0=float(scale * delta[2]),
    )


def _cubic_roots(a3: float, a2: float, a1: float, a0: float) -> list[complex]:
    # Depressed cubic y^3 + p y + q = 0 with x = y - a2 / (3 a3).
    p = a1 / a3 - (a2 / a3) ** 2 / 3
    q = 2 * (a2 / a3) ** 3 / 27 - a2 * a1 / (3 * a3 * a3) + a0 / a3
    shift = a2 / (3 * a3)
    disc = (p / 3) ** 3 + (q / 2) ** 2
    size = max(abs(p / 3) ** 3, (q / 2) ** 2, 1e-300)
    if disc <= 0:
        radius = 2 * math.sqrt(-p / 3)
        angle = math.acos(max(-1.0, min(1.0, -q / 2 / math.sqrt((-p / 3) ** 3)))) / 3 if p else 0.0
        ys = [radius * math.cos(angle - 2 * math.pi * k / 3) for k in range(3)]
        return [complex(y - shift) for y in ys]
    if disc <= 1e-12 * size:
        # Double root.
        simple, double = (3 * q / p, -3 * q / (2 * p)) if p else (0.0, 0.0)
        return [complex(simple - shift), complex(double - shift), complex(double - shift)]
    root = math.sqrt(disc)
    u = math.copysign(abs(-q / 2 + root) ** (1 / 3), -q / 2 + root)
    v = math.copysign(abs(-q / 2 - root) ** (1 / 3), -q / 2 - root)
    real = -(u + v) / 2 - shift
    imag = math.sqrt(3) / 2 * (u - v)
    return [complex(u + v - shift), complex(real, imag), complex(real, -imag)]


def _polish_real(coefficients: Sequence[float], x: float) -> float:
    value = np.polyval(coefficients, x)
    slope = np.polyval(np.polyder(coefficients), x)
    if slope == 0:
        return x
    candidate = x - value / slope
    return candidate if abs(np.polyval(coefficients, candidate)) < abs(value) else x


def _small_root(data: DiscriminantData, x: float) -> float:
    # Near zero, x = -a0 / (a1 + a2 x + a3 x^2) inherits the relative accuracy of a0.
    for _ in range(4):
        denominator = data.a1 + x * (data.a2 + data.a3 * x)
        if denominator == 0:
            break
        x = -data.a0 / denominator
    return x


def branch_points(params: ModelParams) -> BranchPointSet:
    """Locate and classify the branch points.

    Parameters:
        params: Model parameters.

    Raises:
        ClassificationError: When the roots of `p1` are not all real, or their sign pattern
            contradicts the regime expected from `t`.
        CriticalTimeError: When `p1` has a root at zero.

    Returns:
        The branch points.
    """
    tol = params.tol
    data = discriminant_coefficients(params)
    roots = _cubic_roots(*data.p1)
    scale = max(abs(root) for root in roots)
    if any(abs(root.imag) > tol.classify * max(1.0, scale) for root in roots):
        raise ClassificationError(f"p1 has non-real roots {roots}", **params.as_dict())
    if data.a0 == 0:
        raise CriticalTimeError("p1 has a root at zero: t is critical", **params.as_dict())
    xs = [_polish_real(data.p1, root.real) for root in roots]
    xs.sort(key=abs)
    if abs(xs[0]) <= _SMALL_ROOT * abs(xs[1]):
        xs[0] = _small_root(data, xs[0])
    xs.sort(reverse=True)
    positive = [x for x in xs if x > 0]
    negative = sorted(-x for x in xs if x < 0)
    t_c1, t_c2 = critical_times(params.a, params.b) if params.subcritical else (None, None)
    if len(positive) == 2:
        regime = Regime.TWO_CUTS
        z1, z2, z3 = math.sqrt(positive[0]), math.sqrt(positive[1]), math.sqrt(negative[0])
    elif len(positive) == 1:
        regime = Regime.ONE_CUT
        z1, z2, z3 = math.sqrt(positive[0]), math.sqrt(negative[0]), math.sqrt(negative[1])
    else:
        raise ClassificationError(f"unexpected sign pattern of p1 roots {xs}", **params.as_dict())
    if t_c1 is not None and t_c2 is not None:
        expected = Regime.ONE_CUT if t_c1 < params.t < t_c2 else Regime.TWO_CUTS
        if regime is not expected:
            raise ClassificationError(
                f"p1 roots {xs} give {regime.value}, expected {expected.value}",
                **params.as_dict(),
            )
    return BranchPointSet(z1=z1, z2=z2, z3=z3, regime=regime, t_c1=t_c1, t_c2=t_c2, roots=tuple(xs))


def sweep_branch_points(
    a: float,
    b: float,
    ts: Sequence[float],
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> list[BranchPointSet | None]:
    """Compute branch points along a sweep of times.

    Parameters:
        a: Start-point offset.
        b: End-point offset.
        ts: Times of the sweep.
        tol: Tolerances.

    Returns:
        Branch points for each time, `None` at critical times.
    """
    sweep: list[BranchPointSet | None] = []
    for t in ts:
        try:
            sweep.append(branch_points(ModelParams(a, b, float(t), tol=tol)))
        except CriticalTimeError:
            logger.debug(f"skipping critical time t={t}")
            sweep.append(None)
    return sweep


def _match(predicted: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    cost = np.abs(predicted[:, None] - candidates[None, :])
    _, columns = linear_sum_assignment(cost)
    return candidates[columns]


def _gaps(values: np.ndarray) -> np.ndarray:
    distances = np.abs(values[:, None] - values[None, :])
    np.fill_diagonal(distances, np.inf)
    return distances.min(axis=1)


def _richardson(coarse: np.ndarray, middle: np.ndarray, fine: np.ndarray) -> np.ndarray:
    # Samples at offsets e, e/10, e/100; removes the linear then the quadratic term.
    first = (10 * middle - coarse) / 9
    second = (10 * fine - middle) / 9
    return (100 * second - first) / 99


def _log(z: complex, side: int | None = None) -> complex:
    if z.imag == 0 and z.real < 0:
        return complex(math.log(-z.real), math.pi * (side or 1))
    return cmath.log(z)


def _dedupe(vertices: list[complex]) -> list[complex]:
    path: list[complex] = []
    for vertex in vertices:
        if not path or vertex != path[-1]:
            path.append(vertex)
    return path


@dataclass(frozen=True)
class SpectralCurve:
    """The quartic curve of given parameters, with labelled branches.

    Labels are fixed at a far anchor on the positive real axis by matching the
    expansions at infinity, then carried to a hub point close to the cuts.
    Every evaluation starts at the hub and follows a polyline that avoids the
    cross `[-z1, z1] U [-i z3, i z3]` containing all cuts.
    """

    params: ModelParams

    @cached_property
    def _constants(self) -> tuple[float, float, float, float]:
        a, b, t = self.params.a, self.params.b, self.params.t
        var = self.params.variance
        gamma = -a * a / t**2 - b * b / (1 - t) ** 2 + 1 / var
        kappa = 2 * b * b / (t * (1 - t) ** 3) - 1 / var**2
        beta = -b * b / (t**2 * (1 - t) ** 4)
        return var, gamma, kappa, beta

    @cached_property
    def evaluators(self) -> tuple[Callable[[complex], complex], ...]:
        """The coefficients `c4(z), ..., c0(z)` of the monic quartic in `xi`."""
        var, gamma, kappa, beta = self._constants
        return (
            lambda z: 1.0,
            lambda z: -2.0 * z / var,
            lambda z: z * z / var**2 + gamma,
            lambda z: kappa * z,
            lambda z: beta * z * z,
        )

    def coefficients(self, z: complex) -> np.ndarray:
        """Evaluate the quartic coefficients at `z`, highest degree first."""
        return np.array([evaluate(z) for evaluate in self.evaluators], dtype=complex)

    def _z_derivative(self, z: complex) -> np.ndarray:
        var, _, kappa, beta = self._constants
        return np.array([0.0, -2.0 / var, 2.0 * z / var**2, kappa, 2.0 * beta * z], dtype=complex)

    def residual(self, xi: complex | np.ndarray, z: complex) -> np.ndarray:
        """Relative residual `|P(xi, z)| / sum_k |c_k| |xi|^k`."""
        coefficients = self.coefficients(z)
        xi = np.atleast_1d(np.asarray(xi, dtype=complex))
        powers = np.abs(xi)[:, None] ** np.arange(4, -1, -1)
        scale = powers @ np.abs(coefficients)
        return np.abs(np.polyval(coefficients, xi)) / np.where(scale > 0, scale, 1.0)

    def roots(self, z: complex) -> np.ndarray:
        """Unlabelled roots at `z`: companion eigenvalues with Newton polishing."""
        coefficients = self.coefficients(z)
        companion = np.zeros((4, 4), dtype=complex)
        companion[0] = -coefficients[1:]
        companion[1:, :3] = np.eye(3)
        roots = np.linalg.eigvals(companion)
        derivative = np.polyder(coefficients)
        for _ in range(3):
            values = np.polyval(coefficients, roots)
            slopes = np.polyval(derivative, roots)
            usable = np.abs(slopes) > 0
            steps = np.zeros_like(roots)
            steps[usable] = values[usable] / slopes[usable]
            candidates = roots - steps
            better = usable & (np.abs(steps) < 0.25 * _gaps(roots))
            better &= np.abs(np.polyval(coefficients, candidates)) <= np.abs(values)
            if not better.any():
                break
            roots = np.where(better, candidates, roots)
        return roots

    def slopes(self, xi: np.ndarray, z: complex) -> np.ndarray:
        """Derivatives `d xi / d z = -P_z / P_xi` of the roots."""
        p_xi = np.polyval(np.polyder(self.coefficients(z)), xi)
        p_z = np.polyval(self._z_derivative(z), xi)
        usable = np.abs(p_xi) > 0
        return np.where(usable, -p_z / np.where(usable, p_xi, 1.0), 0.0)

    def asymptotic_values(self, z: complex | np.ndarray) -> np.ndarray:
        """Expansions of the four branches at infinity, up to `O(1/z^2)`."""
        a, b, t = self.params.a, self.params.b, self.params.t
        var = self.params.variance
        z = np.asarray(z, dtype=complex)
        inverse = 1 / (2 * z)
        return np.stack(
            [z / var - a / t - inverse, z / var + a / t - inverse, b / (1 - t) + inverse, -b / (1 - t) + inverse],
            axis=-1,
        )

    def polynomial_parts(self, z: complex | np.ndarray) -> np.ndarray:
        """Entire parts of the expansions at infinity."""
        a, b, t = self.params.a, self.params.b, self.params.t
        z = np.asarray(z, dtype=complex)
        one = np.ones_like(z)
        linear = z / self.params.variance
        return np.stack([linear - a / t, linear + a / t, one * b / (1 - t), -one * b / (1 - t)], axis=-1)

    def primitives(self, z: complex, log_z: complex) -> np.ndarray:
        """Primitives of the expansions at infinity, with a given value of `log z`."""
        a, b, t = self.params.a, self.params.b, self.params.t
        quadratic = z * z / (2 * self.params.variance)
        return np.array(
            [
                quadratic - a * z / t - log_z / 2,
                quadratic + a * z / t - log_z / 2,
                b * z / (1 - t) + log_z / 2,
                -b * z / (1 - t) + log_z / 2,
            ],
        )

    @cached_property
    def branch(self) -> BranchPointSet:
        """Branch points of the curve."""
        return branch_points(self.params)

    @cached_property
    def hub(self) -> float:
        """Real point from which every continuation path starts."""
        return 2.0 * max(1.0, self.branch.z1, self.branch.z3)

    @cached_property
    def anchor(self) -> float:
        """Far real point where labels are fixed by the expansions at infinity."""
        return self.params.tol.anchor * max(1.0, self.branch.z1)

    @cached_property
    def hub_roots(self) -> np.ndarray:
        """Labelled roots at the hub."""
        labelled = _match(self.asymptotic_values(self.anchor), self.roots(self.anchor))
        return self.advance(complex(self.anchor), labelled, complex(self.hub))

    def advance(self, start: complex, labels: np.ndarray, end: complex) -> np.ndarray:
        """Continue labelled roots along the straight segment from `start` to `end`.

        Each step predicts the roots with an Euler step, solves the quartic,
        and matches roots to predictions. A step is accepted when the
        prediction error is small compared to the gaps between roots.

        Raises:
            PathError: When the step size collapses.
        """
        if start == end:
            return labels
        ratio = self.params.tol.gap_ratio
        delta = end - start
        position, step, current = 0.0, 1.0, labels
        halvings = 0
        while position < 1.0:
            step = min(step, 1.0 - position)
            target = 1.0 if step >= 1.0 - position else position + step
            z_from = start + position * delta
            z_to = end if target == 1.0 else start + target * delta
            predicted = current + (z_to - z_from) * self.slopes(current, z_from)
            candidates = self.roots(z_to)
            matched = _match(predicted, candidates)
            error = float(np.max(np.abs(matched - predicted)))
            if np.isfinite(error) and error * ratio <= float(np.min(_gaps(candidates))):
                current, position = matched, target
                step *= 2.0
            else:
                step /= 2.0
                halvings += 1
                if step < _MIN_STEP:
                    raise PathError(
                        f"continuation from {start} to {end} stalled at {z_from}",
                        **self.params.as_dict(),
                    )
        if halvings:
            logger.debug(f"segment {start:.6g} -> {end:.6g}: {halvings} step halvings")
        return current

    def follow(self, start: complex, labels: np.ndarray, points: Sequence[complex]) -> np.ndarray:
        """Carry labels from `start` through consecutive points."""
        values = np.empty((len(points), 4), dtype=complex)
        previous, current = start, labels
        for index, point in enumerate(points):
            current = self.advance(previous, current, point)
            values[index] = current
            previous = point
        return values

    def route(self, z: complex, side: int | None = None, *, endpoint: bool = False) -> list[complex]:
        """Vertices of the continuation path from the hub to `z`.

        Parameters:
            z: Target point.
            side: Side (`+1` above, `-1` below) from which real points of the cross are reached.
            endpoint: Allow a target that is a branch point (the end of a cut).

        Raises:
            PathError: When `z` lies on the cross and no side is given.

        Returns:
            The vertices, hub excluded.
        """
        z = complex(z)
        hub, height = self.hub, self.hub
        z1, z3 = self.branch.z1, self.branch.z3
        x, y = z.real, z.imag
        if y == 0.0:
            if x > z1 or (endpoint and x >= z1):
                return [z]
            if x == 0.0:
                raise PathError("the origin joins several cuts", **self.params.as_dict())
            if side is None:
                if x < -z1:
                    side = 1
                else:
                    raise PathError(f"{x} lies on the cross; a side is required", **self.params.as_dict())
            return _dedupe([complex(hub, side * height), complex(x, side * height), z])
        if x == 0.0 and (abs(y) < z3 or (abs(y) == z3 and not endpoint)):
            raise PathError(f"{z} lies on the imaginary cut", **self.params.as_dict())
        level = math.copysign(max(height, abs(y)), y)
        return _dedupe([complex(hub, level), complex(x, level), z])

    def track_route(self, vertices: Sequence[complex]) -> np.ndarray:
        """Labelled roots at the last vertex of a path starting at the hub."""
        current, labels = complex(self.hub), self.hub_roots
        for vertex in vertices:
            labels = self.advance(current, labels, vertex)
            current = vertex
        return labels

    def branch_distance(self, z: complex) -> float:
        """Distance from `z` to the nearest branch point."""
        return min(abs(z - point) for point in self.branch.points)

    @property
    def _bp_radius(self) -> float:
        return self.params.tol.bp * max(1.0, self.branch.z1)

    def frame(self, z: complex, side: int | None = None) -> XiFrame:
        """Labelled branches at `z`.

        Parameters:
            z: The point.
            side: Side from which real points of the cross are reached.

        Raises:
            PathError: When `z` is a branch point or lies on the cross without a side.

        Returns:
            The frame.
        """
        z = complex(z)
        distance = self.branch_distance(z)
        if distance <= self._bp_radius:
            raise PathError(f"{z} is a branch point", **self.params.as_dict())
        if distance <= 10 * self._bp_radius:
            logger.warning(f"evaluation at {z} is {distance:.3g} from a branch point: ill-conditioned")
        vertices = self.route(z, side)
        xi = self.track_route(vertices)
        return self._certify(z, xi, vertices)

    def _certify(self, z: complex, xi: np.ndarray, vertices: Sequence[complex]) -> XiFrame:
        var, _, _, beta = self._constants
        residual = float(np.max(self.residual(xi, z)))
        total = 2 * z / var
        vieta_sum = abs(xi.sum() - total) / max(1.0, float(np.abs(xi).sum()))
        product = beta * z * z
        magnitude = float(np.prod(np.abs(xi)))
        vieta_product = abs(np.prod(xi) - product) / magnitude if magnitude > 0 else abs(product)
        if residual > self.params.tol.resid:
            logger.warning(f"quartic residual {residual:.3g} at {z} exceeds tolerance")
        path = " -> ".join(f"{vertex:.6g}" for vertex in [complex(self.hub), *vertices])
        return XiFrame(
            z=z,
            xi=tuple(complex(value) for value in xi),  # type: ignore[arg-type]
            labeling_path=path,
            residual=residual,
            vieta_sum=float(vieta_sum),
            vieta_product=float(vieta_product),
        )

    def _ladder_scale(self, x: float) -> float:
        edges = [0.0, *self.branch.real_edges]
        distance = min(abs(abs(x) - edge) for edge in edges)
        return min(max(1.0, self.branch.z1), distance)

    def boundary_values(self, xs: Sequence[float], side: int = 1) -> np.ndarray:
        """Boundary values of the branches at real points, from one side.

        Points must be ascending, of the same sign, and away from branch points.
        Branches are evaluated at `x + i side eps` for the offsets of the ladder
        and extrapolated to `eps = 0`.

        Returns:
            An array of shape `(len(xs), 4)`.
        """
        xs = np.asarray(xs, dtype=float)
        scales = np.array([self._ladder_scale(x) for x in xs])
        levels = []
        for offset in self.params.tol.ladder:
            points = xs + 1j * side * offset * scales
            start = self.track_route(self.route(points[0]))
            levels.append(self.follow(points[0], start, points))
        return _richardson(*levels)

    def integrate(
        self,
        start: complex,
        labels: np.ndarray,
        end: complex,
        integrand: Integrand,
        *,
        singular_end: bool = False,
    ) -> tuple[np.ndarray, np.ndarray | None]:
        """Integrate a function of the labelled branches along a segment.

        Panels of the segment are integrated in order with 8- and 16-point
        Gauss-Legendre rules and split until both agree. When the segment ends
        at a branch point, the substitution `s = 1 - (1 - u)^2` removes the
        square-root singularity.

        Parameters:
            start: Start of the segment.
            labels: Labelled roots at `start`.
            end: End of the segment.
            integrand: Function of points and labelled roots, returning one value per sheet.
            singular_end: Whether `end` is a branch point.

        Raises:
            PathError: When a panel cannot be resolved.

        Returns:
            The four integrals and the labelled roots at `end` (`None` for a singular end).
        """
        tol = self.params.tol.quadrature
        delta = end - start
        if singular_end:
            shape, speed = (lambda u: 1 - (1 - u) ** 2), (lambda u: 2 * (1 - u))
        else:
            shape, speed = (lambda u: u), (lambda u: np.ones_like(u))
        total = np.zeros(4, dtype=complex)
        current: np.ndarray | None = labels
        panels = [(0.0, 1.0)]
        while panels:
            low, high = panels.pop()
            half, middle = (high - low) / 2, (high + low) / 2
            us = np.concatenate([middle + half * _COARSE_RULE[0], middle + half * _FINE_RULE[0]])
            order = np.argsort(us)
            points = start + delta * shape(us[order])
            tracked = self.follow(start + delta * shape(low), current, points)  # type: ignore[arg-type]
            values = np.empty((us.size, 4), dtype=complex)
            values[order] = integrand(points, tracked) * (delta * speed(us[order]))[:, None]
            coarse = half * (_COARSE_RULE[1] @ values[:8])
            fine = half * (_FINE_RULE[1] @ values[8:])
            magnitude = half * (_FINE_RULE[1] @ np.abs(values[8:]))
            floor = tol * 1e-3 * abs(delta) * (high - low)
            if np.all(np.abs(fine - coarse) <= tol * np.maximum(magnitude, floor)):
                total += fine
                if high == 1.0 and singular_end:
                    current = None
                else:
                    current = self.advance(complex(points[-1]), tracked[-1], start + delta * shape(high))
            elif high - low < _MIN_PANEL:
                raise PathError(f"quadrature along {start} -> {end} did not converge", **self.params.as_dict())
            else:
                panels.append((middle, high))
                panels.append((low, middle))
        return total, current

    def route_integral(
        self,
        vertices: Sequence[complex],
        integrand: Integrand,
        *,
        singular_end: bool = False,
    ) -> tuple[np.ndarray, np.ndarray | None]:
        """Integrate along a path starting at the hub."""
        current, labels = complex(self.hub), self.hub_roots
        total = np.zeros(4, dtype=complex)
        for index, vertex in enumerate(vertices):
            singular = singular_end and index == len(vertices) - 1
            part, labels = self.integrate(current, labels, vertex, integrand, singular_end=singular)  # type: ignore[arg-type]
            total += part
            current = vertex
        return total, labels

    def _remainder(self, points: np.ndarray, xi: np.ndarray) -> np.ndarray:
        return xi - self.asymptotic_values(points)

    def _entire_free(self, points: np.ndarray, xi: np.ndarray) -> np.ndarray:
        return xi - self.polynomial_parts(points)

    @cached_property
    def _lambda_offsets(self) -> np.ndarray:
        # Integral from the hub to each base point, plus the primitive there.
        z1, hub = self.branch.z1, self.hub
        right, _ = self.route_integral([complex(z1)], self._remainder, singular_end=True)
        above, _ = self.route_integral(
            [complex(hub, hub), complex(-z1, hub), complex(-z1)],
            self._remainder,
            singular_end=True,
        )
        below, _ = self.route_integral(
            [complex(hub, -hub), complex(-z1, -hub), complex(-z1)],
            self._remainder,
            singular_end=True,
        )
        at_right = self.primitives(complex(z1), complex(math.log(z1)))
        at_above = self.primitives(complex(-z1), complex(math.log(z1), math.pi))
        at_below = self.primitives(complex(-z1), complex(math.log(z1), -math.pi))
        return np.array(
            [
                right[0] + at_right[0],
                above[1] + at_above[1],
                right[2] + at_right[2],
                below[3] + at_below[3],
            ],
        )

    def _raw_lambda(self, z: complex, side: int | None, *, endpoint: bool) -> np.ndarray:
        vertices = self.route(z, side, endpoint=endpoint)
        integral, _ = self.route_integral(vertices, self._remainder, singular_end=endpoint)
        return integral + self.primitives(z, _log(z, side)) - self._lambda_offsets

    @cached_property
    def lambda_constant(self) -> complex:
        """Constant added to `lambda_2` and `lambda_4`, matching the primitives at `i z3`."""
        raw = self._raw_lambda(complex(0, self.branch.z3), None, endpoint=True)
        if self.params.t <= self.params.symmetric_time:
            return complex(raw[2] - raw[3])
        return complex(raw[0] - raw[1])

    def lambda_values(self, z: complex, side: int | None = None) -> np.ndarray:
        """Primitives `lambda_1, ..., lambda_4` at `z`.

        `lambda_1` and `lambda_3` vanish at `z1`; `lambda_2` and `lambda_4` equal the
        matching constant at `-z1` reached from above and from below respectively.

        Raises:
            PathError: When `z` lies on `(-inf, -z1]` without a side, or on a cut.
        """
        z = complex(z)
        if z.imag == 0 and z.real <= -self.branch.z1 and side is None:
            raise PathError(f"{z} lies on the logarithmic cut; a side is required", **self.params.as_dict())
        endpoint = self.branch_distance(z) <= self._bp_radius
        values = self._raw_lambda(z, side, endpoint=endpoint)
        values[1] += self.lambda_constant
        values[3] += self.lambda_constant
        return values

    def lambda_march(self, xs: Sequence[complex], side: int | None = None) -> np.ndarray:
        """Primitives along consecutive points joined by segments that avoid the cuts.

        Returns:
            An array of shape `(len(xs), 4)`.
        """
        points = [complex(x) for x in xs]
        values = np.empty((len(points), 4), dtype=complex)
        values[0] = self.lambda_values(points[0], side)
        labels = self.track_route(self.route(points[0], side))
        shift = values[0] - self.primitives(points[0], _log(points[0], side))
        for index in range(1, len(points)):
            part, labels = self.integrate(points[index - 1], labels, points[index], self._remainder)  # type: ignore[arg-type]
            shift = shift + part
            values[index] = shift + self.primitives(points[index], _log(points[index], side))
        return values

    def vertical_pairs(self) -> dict[tuple[int, int], float]:
        """Heights of the vertical cuts and the sheets they join."""
        early = self.params.t < self.params.symmetric_time
        z2, z3 = self.branch.z2, self.branch.z3
        if self.branch.regime is Regime.TWO_CUTS:
            return {(3, 4): z3} if early else {(1, 2): z3}
        return {(1, 2): z2, (3, 4): z3} if early else {(1, 2): z3, (3, 4): z2}

    def cut_components(self, sheet: int) -> list[list[Cut]]:
        """Connected components of the cuts of a sheet."""
        z1, z2 = self.branch.z1, self.branch.z2
        sign = 1 if sheet in (1, 3) else -1
        if self.branch.regime is Regime.TWO_CUTS:
            real = Cut(complex(sign * z2), complex(sign * z1))
        else:
            real = Cut(0j, complex(sign * z1))
        vertical = [
            Cut(complex(0, -height), complex(0, height))
            for pair, height in self.vertical_pairs().items()
            if sheet in pair
        ]
        if self.branch.regime is Regime.ONE_CUT:
            return [[real, *vertical]]
        return [[real]] + [[cut] for cut in vertical]

    def contour_clearance(self) -> float:
        """Distance kept between contours and cuts."""
        z1, z2 = self.branch.z1, self.branch.z2
        if self.branch.regime is Regime.TWO_CUTS:
            return min((z1 - z2) / 4, z2 / 2)
        return min(z1, z2) / 4

    def period(self, sheet: int, contour: Sequence[complex]) -> float:
        """Period `(1 / 2 pi i) * integral of xi_sheet` around a closed polyline.

        Raises:
            PathError: When the result is not a half-integer.
        """
        vertices = [complex(vertex) for vertex in contour]
        labels: np.ndarray | None = self.frame(vertices[0]).xi  # type: ignore[assignment]
        labels = np.asarray(labels)
        total = np.zeros(4, dtype=complex)
        for start, end in zip(vertices, [*vertices[1:], vertices[0]], strict=True):
            part, labels = self.integrate(start, labels, end, self._entire_free)  # type: ignore[arg-type]
            total += part
        value = total[sheet - 1] / (2j * math.pi)
        off_half = abs(value.real - round(2 * value.real) / 2)
        if abs(value.imag) > self.params.tol.period or off_half > self.params.tol.period:
            raise PathError(
                f"period {value:.12g} of sheet {sheet} is not a half-integer",
                sheet=sheet,
                **self.params.as_dict(),
            )
        return float(value.real)

    def locate(self, xi: complex, z: complex) -> int | None:
        """Sheet of the point `(z, xi)`, `None` on the cross or near branch points."""
        z3 = self.branch.z3
        radius = self._bp_radius
        on_real = abs(z.imag) <= radius and abs(z.real) <= self.branch.z1 + radius
        on_imaginary = abs(z.real) <= radius and abs(z.imag) <= z3 + radius
        if on_real or on_imaginary or self.branch_distance(z) <= 10 * radius:
            return None
        values = np.asarray(self.frame(z).xi)
        distances = np.abs(values - xi)
        order = np.argsort(distances)
        if distances[order[0]] > 1e-6 * (1 + abs(xi)) or distances[order[1]] <= 10 * distances[order[0]]:
            return None
        return int(order[0]) + 1


@lru_cache(maxsize=64)
def spectral_curve(params: ModelParams) -> SpectralCurve:
    """Return the (cached) spectral curve of the given parameters."""
    return SpectralCurve(params)


def quartic_coefficients(z: complex, params: ModelParams) -> np.ndarray:
    """Coefficients of the monic quartic in `xi` at `z`, highest degree first."""
    return spectral_curve(params).coefficients(z)


def quartic_residual(xi: complex | np.ndarray, z: complex, params: ModelParams) -> np.ndarray:
    """Relative residual of the quartic at `(z, xi)`."""
    return spectral_curve(params).residual(xi, z)


def xi_frame(z: complex, params: ModelParams, side: int | None = None) -> XiFrame:
    """Labelled branches at `z`.

    Parameters:
        z: The point.
        params: Model parameters.
        side: Side (`+1` or `-1`) from which real points of the cross are reached.

    Returns:
        The frame.
    """
    return spectral_curve(params).frame(z, side)


def parametrize(v: complex, params: ModelParams, *, locate: bool = True) -> ParametrizationPoint:
    """Evaluate the rational parametrization of the curve.

    Parameters:
        v: Rational parameter, possibly infinite.
        params: Model parameters.
        locate: Whether to find the sheet of the image point.

    Raises:
        PoleError: When `v` is too close to `a`, `-a` or `1/(2b)`.

    Returns:
        The point of the curve.
    """
    a, b, t = params.a, params.b, params.t
    v = complex(v)
    if cmath.isinf(v):
        return ParametrizationPoint(v=v, xi=complex(-b / (1 - t)), z=complex(math.inf), sheet_region=4, residual=0.0)
    for pole in (a, -a, 1 / (2 * b)):
        if abs(v - pole) <= params.tol.pole * max(1.0, abs(v)):
            raise PoleError(f"v={v} is a pole of the parametrization", v=str(v), **params.as_dict())
    numerator = b * v * v - v + a * a * b
    xi = numerator / ((1 - t) * (a * a - v * v))
    z = numerator * ((1 - t) * v * v - 2 * t * b * v + t - (1 - t) * a * a) / ((2 * b * v - 1) * (v * v - a * a))
    curve = spectral_curve(params)
    residual = float(curve.residual(xi, z)[0])
    region = curve.locate(xi, z) if locate else None
    return ParametrizationPoint(v=v, xi=xi, z=z, sheet_region=region, residual=residual)


def sheet_cuts(sheet: int, params: ModelParams) -> list[Cut]:
    """Cuts of a sheet in the current regime."""
    return [cut for component in spectral_curve(params).cut_components(sheet) for cut in component]


def cut_contours(sheet: int, params: ModelParams) -> list[list[complex]]:
    """Closed rectangles enclosing each connected component of the cuts of a sheet."""
    curve = spectral_curve(params)
    clearance = curve.contour_clearance()
    contours = []
    for component in curve.cut_components(sheet):
        ends = [point for cut in component for point in cut]
        left = min(point.real for point in ends) - clearance
        right = max(point.real for point in ends) + clearance
        low = min(point.imag for point in ends) - clearance
        high = max(point.imag for point in ends) + clearance
        contours.append([complex(right, high), complex(left, high), complex(left, low), complex(right, low)])
    return contours


def large_contour(params: ModelParams, vertices: int = 32) -> list[complex]:
    """A regular polygon enclosing all cuts, counter-clockwise."""
    radius = 2 * spectral_curve(params).hub
    angles = 2 * math.pi * (np.arange(vertices) + 0.5) / vertices
    return [complex(radius * math.cos(angle), radius * math.sin(angle)) for angle in angles]


def period_integral(sheet: int, contour: Sequence[complex], params: ModelParams) -> float:
    """Return the period of a sheet around a closed polyline (a half-integer)."""
    if sheet not in SHEETS:
        raise DomainError(f"no sheet {sheet}", sheet=sheet)
    return spectral_curve(params).period(sheet, contour)


def lambda_value(sheet: int, z: complex, params: ModelParams, side: int | None = None) -> complex:
    """Primitive `lambda_sheet` at `z`."""
    if sheet not in SHEETS:
        raise DomainError(f"no sheet {sheet}", sheet=sheet)
    return complex(spectral_curve(params).lambda_values(z, side)[sheet - 1])


def branch_expansion(edge: str, params: ModelParams) -> BranchExpansion:
    """Local square-root expansion of the two branches meeting at a real edge.

    Parameters:
        edge: One of `z1`, `z2`, `-z1`, `-z2`.
        params: Model parameters.

    Raises:
        DomainError: When the edge is not a real branch point in the current regime.

    Returns:
        The common value and the square-root coefficient.
    """
    curve = spectral_curve(params)
    position, sign = _edge_position(edge, curve.branch)
    outward = 1.0 if edge in ("z1", "-z2") else -1.0
    first, second = (0, 2) if sign > 0 else (1, 3)
    estimates = []
    values = []
    for offset in (1e-4, 1e-5):
        delta = offset * max(1.0, curve.branch.z1)
        frame = curve.frame(position + outward * delta, side=1)
        estimates.append(abs(frame.xi[first] - frame.xi[second]) / (2 * math.sqrt(delta)))
        values.append((frame.xi[first] + frame.xi[second]).real / 2)
    coefficient = (10 * estimates[1] - estimates[0]) / 9
    value = (10 * values[1] - values[0]) / 9
    return BranchExpansion(edge=edge, value=value, coefficient=coefficient)


def _edge_position(edge: str, branch: BranchPointSet) -> tuple[float, int]:
    positions = {"z1": (branch.z1, 1), "-z1": (-branch.z1, -1)}
    if branch.regime is Regime.TWO_CUTS:
        positions.update({"z2": (branch.z2, 1), "-z2": (-branch.z2, -1)})
    if edge not in positions:
        raise DomainError(f"{edge} is not a real edge in the {branch.regime.value} regime", edge=edge)
    return positions[edge]


def lambda_grid(xs: Sequence[float], ys: Sequence[float], params: ModelParams) -> np.ndarray:
    """Sample `Re(lambda_3 - lambda_4)` on a rectangular grid.

    Points on the cross are `nan`. Rows are computed by marching along each
    horizontal line from the first point of each half-plane side.

    Returns:
        An array of shape `(len(ys), len(xs))`.
    """
    curve = spectral_curve(params)
    z1, z3 = curve.branch.z1, curve.branch.z3
    grid = np.full((len(ys), len(xs)), np.nan)
    xs = np.asarray(xs, dtype=float)
    for row, y in enumerate(ys):
        if y == 0:
            for column, x in enumerate(xs):
                if abs(x) > z1:
                    values = curve.lambda_values(complex(x), side=1)
                    grid[row, column] = (values[2] - values[3]).real
            continue
        for indices in (np.flatnonzero(xs < 0)[::-1], np.flatnonzero(xs > 0)):
            if indices.size:
                values = curve.lambda_march([complex(xs[k], y) for k in indices])
                grid[row, indices] = (values[:, 2] - values[:, 3]).real
        if abs(y) > z3:
            for column in np.flatnonzero(xs == 0):
                values = curve.lambda_values(complex(0, y))
                grid[row, column] = (values[2] - values[3]).real
    return grid
