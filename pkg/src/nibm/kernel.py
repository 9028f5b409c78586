"""Finite-n correlation kernel and its scaling limits.

The positions at time `t` form a biorthogonal ensemble. The kernel is built
by biorthogonalizing `x^p w_1j(x)` against `x^q w_2k(x)` through an LU
factorization of their Gram matrix, carried out in multiprecision arithmetic
because the Gram matrix is exponentially ill-conditioned.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, Literal, Sequence

import mpmath
import numpy as np
from humanize import intcomma, naturaldelta
from scipy import special

from nibm.curve import ModelParams, spectral_curve
from nibm.density import density_at, edge_constant, h_extended
from nibm.errors import DomainError, PrecisionError

logger = logging.getLogger(__name__)

N_MAX = 128
"""Largest supported number of paths."""

_PIVOT_MARGIN = 8
_GL_ORDER = 32


def default_precision(n: int) -> int:
    """Default significand bits for a system of `n` paths."""
    if n <= 32:
        return 256
    if n <= 64:
        return 512
    return 1024


@lru_cache(maxsize=None)
def _context(bits: int) -> mpmath.ctx_mp.MPContext:
    ctx = mpmath.MPContext()
    ctx.prec = bits
    return ctx


def transition_density(t: float, a: float, x: float | np.ndarray, n: int) -> float | np.ndarray:
    """Transition density of a Brownian motion with variance `1/n` per unit time.

    Parameters:
        t: Elapsed time.
        a: Starting point.
        x: End point(s).
        n: Inverse variance.

    Returns:
        The density `sqrt(n / (2 pi t)) exp(-n (x - a)^2 / (2 t))`.
    """
    if not t > 0:
        raise DomainError("the elapsed time must be positive", t=t)
    return np.sqrt(n / (2 * np.pi * t)) * np.exp(-n * (np.asarray(x) - a) ** 2 / (2 * t))


def gaussian_moments(mu: mpmath.mpf, sigma2: mpmath.mpf, count: int) -> list:
    """Moments `E[X^m]`, `m < count`, of a normal variable of mean `mu` and variance `sigma2`."""
    moments = [mu * 0 + 1, mu]
    for k in range(1, count - 1):
        moments.append(mu * moments[k] + k * sigma2 * moments[k - 1])
    return moments[:count]


@dataclass(frozen=True)
class WeightSystem:
    """The four Gaussian weights of the confluent ensemble.

    `w_11`, `w_12` come from the starting points `a`, `-a`, and `w_21`, `w_22`
    from the end points `b`, `-b`. All quantities are computed in the given
    context so that the Gram matrix and the basis share the same parameters.
    """

    params: ModelParams
    ctx: mpmath.ctx_mp.MPContext

    @cached_property
    def _constants(self) -> tuple:
        ctx = self.ctx
        return ctx.mpf(self.params.a), ctx.mpf(self.params.b), ctx.mpf(self.params.t), self.params.n or 0

    def exponent(self, family: int, sign: int, x: mpmath.mpf) -> mpmath.mpf:
        """Exponent of `w_{family, index}` at `x`, `sign = +1` for index 1, `-1` for index 2."""
        a, b, t, n = self._constants
        if family == 1:
            return -n / (2 * t) * (x * x - 2 * sign * a * x)
        return -n / (2 * (1 - t)) * (x * x - 2 * sign * b * x)

    def weights(self, family: int, x: float) -> tuple[mpmath.mpf, mpmath.mpf]:
        """The two weights of a family at `x`."""
        point = self.ctx.mpf(x)
        return self.ctx.exp(self.exponent(family, 1, point)), self.ctx.exp(self.exponent(family, -1, point))

    def product_mean(self, left: int, right: int) -> mpmath.mpf:
        """Mean of the Gaussian `w_1,left * w_2,right`."""
        a, b, t, _ = self._constants
        sign_a = 1 if left == 1 else -1
        sign_b = 1 if right == 1 else -1
        return sign_a * a * (1 - t) + sign_b * b * t


@dataclass(frozen=True)
class KernelEvaluation:
    """Kernel value at a pair of points."""

    x: float
    y: float
    K: float  # noqa: N815
    K_hat: float  # noqa: N815
    """Kernel conjugated by `exp(n (h(x) - h(y)))`."""
    n: int


@dataclass(frozen=True, eq=False)
class BiorthogonalSystem:
    """Biorthogonal functions `phi_j`, `psi_j` for `n` paths.

    `phi_j = sum_a A[j][a] f_a` and `psi_j = sum_b B[j][b] g_b`, where the first
    `n/2` basis functions are `x^p w_11` (resp. `x^q w_21`) and the last `n/2`
    are `x^p w_12` (resp. `x^q w_22`).
    """

    params: ModelParams
    precision_bits: int
    gram: list = field(repr=False)
    A: list = field(repr=False)  # noqa: N815
    B: list = field(repr=False)  # noqa: N815

    @property
    def n(self) -> int:
        """Number of paths."""
        return self.params.n  # type: ignore[return-value]

    @property
    def ctx(self) -> mpmath.ctx_mp.MPContext:
        """Arithmetic context of the system."""
        return _context(self.precision_bits)

    @cached_property
    def _horner(self) -> tuple[list, list]:
        half = self.n // 2
        left = [(row[:half][::-1], row[half:][::-1]) for row in self.A]
        right = [(row[:half][::-1], row[half:][::-1]) for row in self.B]
        return left, right

    @cached_property
    def weights(self) -> WeightSystem:
        """Weights evaluated in the context of the system."""
        return WeightSystem(self.params, self.ctx)

    def phi(self, x: float) -> list:
        """Values of all `phi_j` at `x`, in working precision."""
        ctx, point = self.ctx, self.ctx.mpf(x)
        first, second = self.weights.weights(1, x)
        return [first * ctx.polyval(p, point) + second * ctx.polyval(q, point) for p, q in self._horner[0]]

    def psi(self, y: float) -> list:
        """Values of all `psi_j` at `y`, in working precision."""
        ctx, point = self.ctx, self.ctx.mpf(y)
        first, second = self.weights.weights(2, y)
        return [first * ctx.polyval(p, point) + second * ctx.polyval(q, point) for p, q in self._horner[1]]

    def kernel(self, x: float, y: float) -> float:
        """`K_n(x, y) = sum_j phi_j(x) psi_j(y)`."""
        return float(self.ctx.fdot(self.phi(x), self.psi(y)))

    def kernel_matrix(self, xs: Sequence[float], ys: Sequence[float], threads: int = 1) -> np.ndarray:
        """Kernel values `K_n(x_i, y_j)`."""
        with ThreadPoolExecutor(max_workers=threads) as executor:
            phis = list(executor.map(self.phi, xs))
            psis = list(executor.map(self.psi, ys))
        return np.array([[float(self.ctx.fdot(phi, psi)) for psi in psis] for phi in phis])

    def diagonal(self, xs: Sequence[float], threads: int = 1) -> np.ndarray:
        """Kernel values `K_n(x, x)`."""
        with ThreadPoolExecutor(max_workers=threads) as executor:
            return np.array(list(executor.map(lambda x: self.kernel(x, x), xs)))


@dataclass(frozen=True)
class ScalingReport:
    """Comparison of the rescaled kernel with a limiting kernel along a sweep of `n`."""

    mode: Literal["bulk", "edge"]
    location: str
    """Bulk point `x0` or edge name."""
    n_list: tuple[int, ...]
    rows: tuple[tuple[int, float, float, float, float], ...]
    """Rows `(n, u, v, measured, reference)`."""
    sup_errors: tuple[float, ...]
    """Largest error for each `n`."""
    rate: float
    """Slope of `log(error)` against `log(n)`."""

    def as_dict(self) -> dict[str, object]:
        """Return a JSON-ready dictionary (without rows)."""
        return {
            "mode": self.mode,
            "location": self.location,
            "n_list": list(self.n_list),
            "sup_errors": list(self.sup_errors),
            "rate": self.rate,
        }


def gram_matrix(params: ModelParams, precision_bits: int | None = None) -> list:
    """Gram matrix `G[a][b] = integral of f_a(x) g_b(x) dx` in closed form.

    Parameters:
        params: Model parameters, with `n` set.
        precision_bits: Working precision.

    Raises:
        DomainError: When `n` is missing or too large.

    Returns:
        The matrix as nested lists of multiprecision numbers.
    """
    n = params.n
    if n is None or n > N_MAX:
        raise DomainError(f"the number of paths must be set and at most {N_MAX}", **params.as_dict())
    ctx = _context(precision_bits or default_precision(n))
    t = ctx.mpf(params.t)
    var = t * (1 - t)
    sigma2 = var / n
    half = n // 2
    system = WeightSystem(params, ctx)
    blocks = {}
    for left in (1, 2):
        for right in (1, 2):
            mu = system.product_mean(left, right)
            mass = ctx.exp(n * mu * mu / (2 * var)) * ctx.sqrt(2 * ctx.pi * var / n)
            blocks[left, right] = [mass * moment for moment in gaussian_moments(mu, sigma2, n - 1)]
    gram = []
    for alpha in range(n):
        left, p = divmod(alpha, half)
        gram.append([blocks[left + 1, beta // half + 1][p + beta % half] for beta in range(n)])
    return gram


def _lu_full_pivot(ctx: mpmath.ctx_mp.MPContext, matrix: list, bits: int) -> tuple[list, list, list, list]:
    size = len(matrix)
    work = [list(row) for row in matrix]
    rows, cols = list(range(size)), list(range(size))
    largest = max(abs(value) for row in work for value in row)
    floor = largest * ctx.ldexp(1, -(bits - _PIVOT_MARGIN))
    smallest = largest
    for k in range(size):
        pivot_row, pivot_col = max(
            ((i, j) for i in range(k, size) for j in range(k, size)),
            key=lambda ij: abs(work[ij[0]][ij[1]]),
        )
        pivot = work[pivot_row][pivot_col]
        if abs(pivot) <= floor:
            raise PrecisionError(
                f"pivot collapse at step {k} with {bits} bits: increase the precision",
                step=k,
                precision_bits=bits,
            )
        smallest = min(smallest, abs(pivot))
        work[k], work[pivot_row] = work[pivot_row], work[k]
        rows[k], rows[pivot_row] = rows[pivot_row], rows[k]
        for row in work:
            row[k], row[pivot_col] = row[pivot_col], row[k]
        cols[k], cols[pivot_col] = cols[pivot_col], cols[k]
        for i in range(k + 1, size):
            factor = work[i][k] / pivot
            work[i][k] = factor
            for j in range(k + 1, size):
                work[i][j] -= factor * work[k][j]
    logger.debug(f"LU pivots span {float(ctx.log10(largest / smallest)):.1f} decades")
    one, zero = ctx.mpf(1), ctx.mpf(0)
    lower = [[work[i][j] if j < i else (one if i == j else zero) for j in range(size)] for i in range(size)]
    upper = [[work[i][j] if j >= i else ctx.mpf(0) for j in range(size)] for i in range(size)]
    return lower, upper, rows, cols


def _invert_lower(ctx: mpmath.ctx_mp.MPContext, lower: list) -> list:
    size = len(lower)
    inverse = [[ctx.mpf(0)] * size for _ in range(size)]
    for i in range(size):
        inverse[i][i] = ctx.mpf(1)
        for j in range(i):
            inverse[i][j] = -ctx.fsum(lower[i][k] * inverse[k][j] for k in range(j, i))
    return inverse


def _invert_upper(ctx: mpmath.ctx_mp.MPContext, upper: list) -> list:
    size = len(upper)
    inverse = [[ctx.mpf(0)] * size for _ in range(size)]
    for i in reversed(range(size)):
        inverse[i][i] = 1 / upper[i][i]
        for j in range(i + 1, size):
            inverse[i][j] = -ctx.fsum(upper[i][k] * inverse[k][j] for k in range(i + 1, j + 1)) / upper[i][i]
    return inverse


def biorthogonal_system(params: ModelParams, precision_bits: int | None = None) -> BiorthogonalSystem:
    """Biorthogonalize the two bases.

    With `P G Q = L U`, the coefficients are `A = L^-1 P` and `B^T = Q U^-1`,
    so that `A G B^T = I`.

    Parameters:
        params: Model parameters, with `n` set.
        precision_bits: Working precision, see [`default_precision`][nibm.kernel.default_precision].

    Raises:
        PrecisionError: When the factorization loses all significant bits.

    Returns:
        The system.
    """
    start = time.perf_counter()
    n = params.n
    gram = gram_matrix(params, precision_bits)
    bits = precision_bits or default_precision(n)  # type: ignore[arg-type]
    ctx = _context(bits)
    lower, upper, rows, cols = _lu_full_pivot(ctx, gram, bits)
    lower_inverse = _invert_lower(ctx, lower)
    upper_inverse = _invert_upper(ctx, upper)
    size = len(gram)
    zero = ctx.mpf(0)
    left = [[zero] * size for _ in range(size)]
    right = [[zero] * size for _ in range(size)]
    for j in range(size):
        for i in range(size):
            left[j][rows[i]] = lower_inverse[j][i]
            right[j][cols[i]] = upper_inverse[i][j]
    system = BiorthogonalSystem(params=params, precision_bits=bits, gram=gram, A=left, B=right)
    elapsed = time.perf_counter() - start
    duration = naturaldelta(elapsed, minimum_unit="milliseconds")
    logger.debug(f"biorthogonal system n={n} at {bits} bits built in {duration}")
    return system


def gram_residual(system: BiorthogonalSystem) -> float:
    """Largest entry of `A G B^T - I`, computed at working precision."""
    ctx = system.ctx
    size = len(system.gram)
    columns = [list(column) for column in zip(*system.gram, strict=True)]
    products = [[ctx.fdot(system.A[i], column) for column in columns] for i in range(size)]
    worst = ctx.mpf(0)
    for i in range(size):
        for j in range(size):
            entry = ctx.fdot(products[i], system.B[j]) - (1 if i == j else 0)
            worst = max(worst, abs(entry))
    return float(worst)


def kernel_eval(
    x: float,
    y: float,
    system: BiorthogonalSystem,
    h: Callable[[float], float] | None = None,
) -> KernelEvaluation:
    """Evaluate the kernel and its rescaled version.

    Parameters:
        x: First point.
        y: Second point.
        system: The biorthogonal system.
        h: Rescaling function, the density module's `h` extended by zero by default.

    Returns:
        The evaluation.
    """
    if h is None:
        h = lambda point: h_extended(point, system.params)  # noqa: E731
    value = system.kernel(x, y)
    gauge = math.exp(system.n * (h(x) - h(y)))
    return KernelEvaluation(x=x, y=y, K=value, K_hat=gauge * value, n=system.n)


def correlation_det(x: float, y: float, system: BiorthogonalSystem) -> float:
    """Two-point correlation `K(x,x) K(y,y) - K(x,y) K(y,x)`."""
    ctx = system.ctx
    phi_x, phi_y, psi_x, psi_y = system.phi(x), system.phi(y), system.psi(x), system.psi(y)
    value = ctx.fdot(phi_x, psi_x) * ctx.fdot(phi_y, psi_y) - ctx.fdot(phi_x, psi_y) * ctx.fdot(phi_y, psi_x)
    return float(value)


def diagonal_density(xs: Sequence[float], system: BiorthogonalSystem, threads: int = 1) -> np.ndarray:
    """Finite-n density `K_n(x, x) / n`."""
    return system.diagonal(xs, threads) / system.n


def quadrature_nodes(system: BiorthogonalSystem) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes on `[-X, X]`, `X = z1 + 10 / sqrt(n)`."""
    z1 = spectral_curve(system.params).branch.z1
    bound = z1 + 10 / math.sqrt(system.n)
    panels = max(8, system.n)
    nodes, weights = np.polynomial.legendre.leggauss(_GL_ORDER)
    edges = np.linspace(-bound, bound, panels + 1)
    half = np.diff(edges) / 2
    middle = (edges[1:] + edges[:-1]) / 2
    points = (middle[:, None] + half[:, None] * nodes[None, :]).ravel()
    return points, (half[:, None] * weights[None, :]).ravel()


def trace_check(system: BiorthogonalSystem, threads: int = 1) -> float:
    """Quadrature value of the trace `integral of K_n(x, x) dx`, which equals `n`."""
    points, weights = quadrature_nodes(system)
    start = time.perf_counter()
    trace = float(weights @ system.diagonal(points, threads))
    elapsed = time.perf_counter() - start
    logger.debug(f"trace over {intcomma(points.size)} nodes in {naturaldelta(elapsed, minimum_unit='milliseconds')}")
    return trace


def reproducing_check(
    system: BiorthogonalSystem,
    xs: Sequence[float],
    ys: Sequence[float],
    threads: int = 1,
) -> float:
    """Relative residual of `integral of K(x, s) K(s, y) ds = K(x, y)` over all pairs."""
    points, weights = quadrature_nodes(system)
    left = system.kernel_matrix(xs, points, threads)
    right = system.kernel_matrix(points, ys, threads)
    direct = system.kernel_matrix(xs, ys, threads)
    composed = (left * weights[None, :]) @ right
    return float(np.max(np.abs(composed - direct)) / np.max(np.abs(direct)))


def sine_kernel(u: float | np.ndarray, v: float | np.ndarray) -> float | np.ndarray:
    """Sine kernel `sin(pi (u - v)) / (pi (u - v))`."""
    return np.sinc(np.asarray(u) - np.asarray(v))


def airy_numerator(u: float | np.ndarray, v: float | np.ndarray) -> float | np.ndarray:
    """`Ai(u) Ai'(v) - Ai'(u) Ai(v)`."""
    ai_u, aip_u, _, _ = special.airy(u)
    ai_v, aip_v, _, _ = special.airy(v)
    return ai_u * aip_v - aip_u * ai_v


def airy_kernel(u: float | np.ndarray, v: float | np.ndarray) -> float | np.ndarray:
    """Airy kernel, with the diagonal `Ai'(u)^2 - u Ai(u)^2`."""
    u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
    ai_u, aip_u, _, _ = special.airy(u)
    diagonal = aip_u**2 - u * ai_u**2
    close = np.abs(u - v) <= 1e-10 * (1 + np.abs(u))
    difference = np.where(close, 1.0, u - v)
    value = np.where(close, diagonal, airy_numerator(u, v) / difference)
    return value if value.ndim else float(value)


def _report(
    mode: Literal["bulk", "edge"],
    location: str,
    n_list: Sequence[int],
    grid: Sequence[tuple[float, float]],
    params: ModelParams,
    position: Callable[[int, float], float],
    scale: Callable[[int], float],
    reference: Callable[[float, float], float],
    precision_bits: int | None,
    threads: int,
) -> ScalingReport:
    rows = []
    sup_errors = []
    for n in n_list:
        system = biorthogonal_system(params.with_n(n), precision_bits)
        points = sorted({position(n, coordinate) for pair in grid for coordinate in pair})
        index = {point: k for k, point in enumerate(points)}
        matrix = system.kernel_matrix(points, points, threads)
        worst = 0.0
        for u, v in grid:
            i, j = index[position(n, u)], index[position(n, v)]
            measured = matrix[i, j] * matrix[j, i] / scale(n) ** 2
            expected = float(reference(u, v)) ** 2
            rows.append((n, u, v, float(measured), expected))
            worst = max(worst, abs(measured - expected))
        sup_errors.append(worst)
        logger.info(f"{mode} check at {location}, n={n}: sup error {worst:.3e}")
    if len(n_list) > 1 and all(error > 0 for error in sup_errors):
        rate = float(np.polyfit(np.log(n_list), np.log(sup_errors), 1)[0])
    else:
        rate = math.nan
    return ScalingReport(
        mode=mode,
        location=location,
        n_list=tuple(n_list),
        rows=tuple(rows),
        sup_errors=tuple(sup_errors),
        rate=rate,
    )


def bulk_scaling_check(
    x0: float,
    n_list: Sequence[int],
    grid: Sequence[tuple[float, float]],
    params: ModelParams,
    precision_bits: int | None = None,
    threads: int = 1,
) -> ScalingReport:
    """Compare `K(x,y) K(y,x) / (n rho(x0))^2` with the squared sine kernel.

    Points are `x = x0 + u / (n rho(x0))`, `y = x0 + v / (n rho(x0))`.

    Raises:
        DomainError: When `x0` is not strictly inside the support.
    """
    curve = spectral_curve(params)
    edges = [edge for interval in curve.branch.support for edge in interval]
    inside = any(low < x0 < high for low, high in curve.branch.support)
    if not inside or min(abs(x0 - edge) for edge in edges) <= params.tol.bp * max(1.0, curve.branch.z1):
        raise DomainError(f"x0={x0} is not strictly inside the support", x0=x0, **params.as_dict())
    rho = density_at(x0, params)
    return _report(
        "bulk",
        f"{x0:.17g}",
        n_list,
        grid,
        params,
        position=lambda n, u: x0 + u / (n * rho),
        scale=lambda n: n * rho,
        reference=sine_kernel,  # type: ignore[arg-type]
        precision_bits=precision_bits,
        threads=threads,
    )


_EDGE_ORIENTATION = {"z1": 1.0, "-z2": 1.0, "z2": -1.0, "-z1": -1.0}


def edge_scaling_check(
    edge: str,
    n_list: Sequence[int],
    grid: Sequence[tuple[float, float]],
    params: ModelParams,
    precision_bits: int | None = None,
    threads: int = 1,
) -> ScalingReport:
    """Compare `K(x,y) K(y,x) / (c n)^(4/3)` with the squared Airy kernel.

    Points are `x = e + s u / (c n)^(2/3)`, where `s = +1` at `z1` and `-z2`,
    `-1` at `z2` and `-z1`, so that `u > 0` points away from the support.
    Mirror edges use the constant of the positive edge.

    Raises:
        DomainError: When the edge does not exist in the current regime.
    """
    if edge not in _EDGE_ORIENTATION:
        raise DomainError(f"unknown edge {edge!r}", edge=edge)
    branch = spectral_curve(params).branch
    constant = edge_constant(edge.lstrip("-"), params)
    position_of_edge = {"z1": branch.z1, "z2": branch.z2, "-z1": -branch.z1, "-z2": -branch.z2}[edge]
    sign = _EDGE_ORIENTATION[edge]
    return _report(
        "edge",
        edge,
        n_list,
        grid,
        params,
        position=lambda n, u: position_of_edge + sign * u / (constant * n) ** (2 / 3),
        scale=lambda n: (constant * n) ** (2 / 3),
        reference=airy_kernel,  # type: ignore[arg-type]
        precision_bits=precision_bits,
        threads=threads,
    )
