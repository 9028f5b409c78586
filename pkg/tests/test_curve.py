"""Tests for the `curve` module."""

from __future__ import annotations

import math

import numpy as np
import pytest

from nibm import curve, errors
from nibm.curve import ModelParams, Regime


def test_critical_times_golden() -> None:
    """Critical times of `a = b = 0.6`."""
    t_c1, t_c2 = curve.critical_times(0.6, 0.6)
    assert t_c1 == pytest.approx(0.298263354, abs=1e-8)
    assert t_c2 == pytest.approx(0.701736646, abs=1e-8)


@pytest.mark.parametrize(("a", "b"), [(0.6, 0.6), (0.3, 0.8), (1.2, 0.1), (0.05, 0.05)])
def test_critical_times_sum(a: float, b: float) -> None:
    """The sum of the critical times has no square root."""
    t_c1, t_c2 = curve.critical_times(a, b)
    assert 0 < t_c1 < a / (a + b) < t_c2 < 1
    assert t_c1 + t_c2 == pytest.approx((1 + 2 * a * a) / (1 + a * a + b * b), rel=1e-12)
    assert curve.critical_residual(t_c1, a, b) == pytest.approx(0, abs=1e-12)


def test_critical_times_small_separation() -> None:
    """Critical times tend to the ends of the interval."""
    t_c1, t_c2 = curve.critical_times(1e-4, 1e-4)
    assert t_c1 < 1e-3
    assert t_c2 > 1 - 1e-3


@pytest.mark.parametrize(("a", "b"), [(1.0, 0.7), (1.0, 0.5)])
def test_no_critical_times(a: float, b: float) -> None:
    """No critical time when `a * b >= 1/2`."""
    with pytest.raises(errors.DomainError):
        curve.critical_times(a, b)


@pytest.mark.parametrize(
    ("kwargs", "error"),
    [
        ({"a": -1.0, "b": 0.6, "t": 0.5}, errors.DomainError),
        ({"a": 0.6, "b": 0.6, "t": 1.0}, errors.DomainError),
        ({"a": 0.6, "b": 0.6, "t": 0.5, "n": 3}, errors.DomainError),
        ({"a": 1.0, "b": 0.5, "t": 0.5}, errors.CriticalSeparationError),
        ({"a": 0.6, "b": 0.6, "t": 0.2982634}, errors.CriticalTimeError),
    ],
)
def test_invalid_params(kwargs: dict, error: type[Exception]) -> None:
    """Invalid parameters are rejected at construction."""
    with pytest.raises(error):
        ModelParams(**kwargs)


def test_small_time_factorization() -> None:
    """Near `t = 0` the cubic factors as `4a^2 (x - a^2)^2 (4b^2 x - 4a^2 b^2 + 1)`."""
    a, b = 0.6, 0.6
    cubic = np.array(curve.discriminant_coefficients(ModelParams(a, b, 1e-8)).p1)
    expected = 4 * a * a * np.polymul(np.polymul([1, -a * a], [1, -a * a]), [4 * b * b, 1 - 4 * a * a * b * b])
    np.testing.assert_allclose(cubic / cubic[0], expected / expected[0], rtol=1e-6, atol=1e-6)


def test_symmetric_time_roots(one_cut: ModelParams) -> None:
    """At `t = a / (a + b)` the cubic has a simple and a double root."""
    simple, double = curve.symmetric_time_roots(0.6, 0.6)
    assert simple == pytest.approx(1.72)
    assert double == pytest.approx(-0.0136111, abs=1e-7)
    roots = np.sort(np.roots(curve.discriminant_coefficients(ModelParams(0.6, 0.6, 0.5)).p1).real)
    np.testing.assert_allclose(roots, [double, double, simple], atol=1e-6)


def test_constant_coefficient_vanishes_at_critical_time() -> None:
    """One root of the cubic reaches zero at the critical times."""
    rng = np.random.default_rng(7)
    tol = curve.DEFAULT_TOLERANCES.with_overrides({"crit": 1e-14})
    pairs = 0
    while pairs < 100:
        a, b = rng.uniform(0.1, 1.2, size=2)
        if not 0.02 < a * b < 0.45:
            continue
        pairs += 1
        for t_c in curve.critical_times(float(a), float(b)):
            cubic = curve.discriminant_coefficients(ModelParams(float(a), float(b), t_c * (1 + 1e-12), tol=tol))
            assert abs(cubic.a0) <= 1e-8 * max(abs(value) for value in cubic.p1)


@pytest.mark.parametrize(
    ("a", "b", "t"),
    [(0.33047, 0.94672, 0.49694), (0.62383, 0.65080, 0.32748), (0.6, 0.6, 0.2982), (0.6, 0.6, 0.7018)],
)
def test_regime_close_to_critical_times(a: float, b: float, t: float) -> None:
    """A small root of the cubic is classified by its sign, not mistaken for zero."""
    t_c1, t_c2 = curve.critical_times(a, b)
    branch = curve.branch_points(ModelParams(a, b, t))
    assert branch.regime is (Regime.ONE_CUT if t_c1 < t < t_c2 else Regime.TWO_CUTS)
    assert min(abs(root) for root in branch.roots) > 0


@pytest.mark.slow
def test_regime_random_sweep() -> None:
    """The regime matches the critical times over random parameters."""
    rng = np.random.default_rng(500)
    checked = 0
    while checked < 500:
        a, b = (float(value) for value in rng.uniform(0.1, 1.5, size=2))
        t = float(rng.uniform(0.01, 0.99))
        if abs(a * b - 0.5) < 1e-3:
            continue
        if a * b < 0.5:
            t_c1, t_c2 = curve.critical_times(a, b)
            if min(abs(t - t_c1), abs(t - t_c2)) <= 1e-6:
                continue
            expected = Regime.ONE_CUT if t_c1 < t < t_c2 else Regime.TWO_CUTS
        else:
            expected = Regime.TWO_CUTS
        checked += 1
        assert curve.branch_points(ModelParams(a, b, t)).regime is expected, (a, b, t)


def test_two_cuts_branch_points(two_cuts: ModelParams) -> None:
    """At `t = 0.25` the groups are separated."""
    branch = curve.branch_points(two_cuts)
    assert branch.regime is Regime.TWO_CUTS
    assert branch.z1 > branch.z2 > 0
    assert branch.z3 > 0
    assert branch.root_counts() == (4, 2)
    cubic = curve.discriminant_coefficients(two_cuts)
    positive = np.sort(np.sqrt([root.real for root in np.roots(cubic.p1) if root.real > 0]))
    np.testing.assert_allclose(positive, [branch.z2, branch.z1], rtol=1e-9)
    assert len(branch.support) == 2


def test_one_cut_branch_points(one_cut: ModelParams) -> None:
    """At `t = 0.45` the groups have merged."""
    branch = curve.branch_points(one_cut)
    assert branch.regime is Regime.ONE_CUT
    assert branch.root_counts() == (2, 4)
    assert branch.support == ((-branch.z1, branch.z1),)


def test_double_imaginary_root() -> None:
    """At the symmetric time the two imaginary branch points coincide."""
    branch = curve.branch_points(ModelParams(0.6, 0.6, 0.5))
    assert branch.regime is Regime.ONE_CUT
    assert branch.z2 == pytest.approx(0.1166667, abs=1e-5)
    assert branch.z3 == pytest.approx(0.1166667, abs=1e-5)


@pytest.mark.parametrize("a", [0.2, 0.4, 0.6])
@pytest.mark.parametrize("b", [0.3, 0.5, 0.7])
def test_regime_prediction(a: float, b: float) -> None:
    """The regime matches the position of `t` relative to the critical times."""
    if a * b >= 0.5:
        pytest.skip("no critical times")
    t_c1, t_c2 = curve.critical_times(a, b)
    for t in np.linspace(0.03, 0.97, 12):
        if min(abs(t - t_c1), abs(t - t_c2)) < 1e-3:
            continue
        branch = curve.branch_points(ModelParams(a, b, float(t)))
        expected = Regime.ONE_CUT if t_c1 < t < t_c2 else Regime.TWO_CUTS
        assert branch.regime is expected


def test_merging_edges() -> None:
    """The inner edge shrinks to zero as `t` increases to the first critical time."""
    t_c1, _ = curve.critical_times(0.6, 0.6)
    ts = t_c1 - np.logspace(-1.5, -3, 6)
    sweep = curve.sweep_branch_points(0.6, 0.6, ts)
    inner = [branch.z2 for branch in sweep]  # type: ignore[union-attr]
    assert all(branch.regime is Regime.TWO_CUTS for branch in sweep)  # type: ignore[union-attr]
    assert all(later < earlier for earlier, later in zip(inner, inner[1:], strict=False))
    assert inner[-1] < 0.05


def test_sweep_skips_critical_times() -> None:
    """Critical times yield no branch points."""
    t_c1, _ = curve.critical_times(0.6, 0.6)
    sweep = curve.sweep_branch_points(0.6, 0.6, [0.2, t_c1, 0.4])
    assert sweep[1] is None
    assert sweep[0] is not None
    assert sweep[2] is not None


def test_anchor_labels(two_cuts: ModelParams) -> None:
    """Far from the cuts the branches follow their expansions at infinity."""
    z = 1e6
    frame = curve.xi_frame(z, two_cuts)
    b, t = two_cuts.b, two_cuts.t
    assert frame.xi[2] == pytest.approx(b / (1 - t) + 1 / (2 * z), abs=1e-8)
    assert frame.xi[3] == pytest.approx(-b / (1 - t) + 1 / (2 * z), abs=1e-8)


@pytest.mark.parametrize("z", [0.3 + 0.2j, -1.1 + 0.05j, 2.0, 0.01 - 0.9j, -3.0 + 1e-3j])
def test_vieta(two_cuts: ModelParams, z: complex) -> None:
    """The roots sum to `2z / (t(1-t))` and satisfy the quartic."""
    frame = curve.xi_frame(z, two_cuts)
    assert abs(sum(frame.xi) - 2 * z / two_cuts.variance) <= 1e-9 * max(1.0, sum(abs(xi) for xi in frame.xi))
    assert frame.residual <= 1e-9
    assert frame.vieta_product <= 1e-9


def test_density_sign_convention(two_cuts: ModelParams) -> None:
    """Just above the outer cut, the first branch has a positive imaginary part."""
    branch = curve.branch_points(two_cuts)
    for x in np.linspace(branch.z2, branch.z1, 7)[1:-1]:
        assert curve.xi_frame(complex(x, 1e-8), two_cuts).xi[0].imag > 0


def test_real_cross_needs_side(two_cuts: ModelParams) -> None:
    """Points on a cut need a side."""
    branch = curve.branch_points(two_cuts)
    with pytest.raises(errors.PathError):
        curve.xi_frame((branch.z1 + branch.z2) / 2, two_cuts)


def test_branch_point_rejected(two_cuts: ModelParams) -> None:
    """Branch points have no frame."""
    with pytest.raises(errors.PathError):
        curve.xi_frame(curve.branch_points(two_cuts).z1, two_cuts)


@pytest.mark.parametrize("params", [ModelParams(0.6, 0.6, 0.25), ModelParams(0.6, 0.6, 0.45)])
def test_no_monodromy(params: ModelParams) -> None:
    """Labels come back unchanged along a loop around all cuts."""
    spectral = curve.spectral_curve(params)
    contour = curve.large_contour(params)
    start = complex(contour[0])
    labels = np.asarray(curve.xi_frame(start, params).xi)
    steps = []
    for begin, end in zip(contour, [*contour[1:], contour[0]], strict=True):
        steps.extend(begin + (end - begin) * k / 8 for k in range(1, 9))
    values = spectral.follow(start, labels, steps)
    np.testing.assert_allclose(values[-1], labels, rtol=1e-9, atol=1e-12)


@pytest.mark.slow
@pytest.mark.parametrize(
    "params",
    [
        ModelParams(0.6, 0.6, 0.25),
        ModelParams(0.6, 0.6, 0.45),
        ModelParams(0.6, 0.6, 0.6),
        ModelParams(0.6, 0.6, 0.8),
        ModelParams(0.4, 0.3, 0.08),
        ModelParams(0.4, 0.3, 0.5),
        ModelParams(0.2, 0.7, 0.3),
        ModelParams(1.2, 0.1, 0.5),
        ModelParams(1.0, 0.7, 0.5),
        ModelParams(0.3, 0.8, 0.9),
    ],
)
def test_parametrization_residual(params: ModelParams) -> None:
    """The rational parametrization solves the quartic."""
    rng = np.random.default_rng(20)
    vs = rng.normal(size=1000) + 1j * rng.normal(size=1000)
    worst = max(curve.parametrize(complex(v), params, locate=False).residual for v in vs)
    assert worst <= 1e-10


def test_parametrization_at_infinity(one_cut: ModelParams) -> None:
    """Infinity is sent to the fourth sheet at infinity."""
    point = curve.parametrize(complex("inf"), one_cut)
    assert point.sheet_region == 4
    assert point.xi == pytest.approx(-one_cut.b / (1 - one_cut.t))
    large = curve.parametrize(1e7, one_cut, locate=False)
    assert abs(large.z) > 1e5
    assert large.xi == pytest.approx(-one_cut.b / (1 - one_cut.t), rel=1e-5)


@pytest.mark.parametrize("v", [0.6, -0.6, 1 / 1.2])
def test_parametrization_poles(one_cut: ModelParams, v: float) -> None:
    """Poles of the parametrization are rejected."""
    with pytest.raises(errors.PoleError):
        curve.parametrize(v, one_cut)


def test_sheet_of_parametrized_point(two_cuts: ModelParams) -> None:
    """Points near `v = a` lie near infinity on the first sheet."""
    point = curve.parametrize(0.6 + 1e-4j, two_cuts)
    assert point.sheet_region == 1


@pytest.mark.parametrize("params", [ModelParams(0.6, 0.6, 0.25), ModelParams(0.6, 0.6, 0.45)])
@pytest.mark.parametrize(("sheet", "expected"), [(1, -0.5), (2, -0.5), (3, 0.5), (4, 0.5)])
def test_large_contour_period(params: ModelParams, sheet: int, expected: float) -> None:
    """Residues at infinity: `-1/2` on the first two sheets, `1/2` on the last two."""
    assert curve.period_integral(sheet, curve.large_contour(params), params) == pytest.approx(expected, abs=1e-8)


@pytest.mark.parametrize("params", [ModelParams(0.6, 0.6, 0.25), ModelParams(0.6, 0.6, 0.45)])
@pytest.mark.parametrize("sheet", [1, 2, 3, 4])
def test_cut_periods_are_half_integers(params: ModelParams, sheet: int) -> None:
    """Periods around the cuts of every sheet are half-integers."""
    for contour in curve.cut_contours(sheet, params):
        value = curve.period_integral(sheet, contour, params)
        assert abs(2 * value - round(2 * value)) <= 1e-8


@pytest.mark.parametrize("t", [0.45, 0.55])
def test_vertical_cuts_swap_after_symmetric_time(t: float) -> None:
    """Past `a / (a + b)` the vertical cuts of heights `z2` and `z3` trade sheets."""
    params = ModelParams(0.6, 0.6, t)
    branch = curve.branch_points(params)
    assert branch.regime is Regime.ONE_CUT
    first = [cut.end.imag for cut in curve.sheet_cuts(1, params)[1:]]
    third = [cut.end.imag for cut in curve.sheet_cuts(3, params)[1:]]
    low, high = (branch.z2, branch.z3) if t < params.symmetric_time else (branch.z3, branch.z2)
    assert first == [pytest.approx(low)]
    assert third == [pytest.approx(high)]


@pytest.mark.parametrize("sheet", [1, 2, 3, 4])
def test_periods_with_swapped_vertical_cuts(sheet: int) -> None:
    """Periods stay half-integers between the symmetric time and the second critical time."""
    params = ModelParams(0.6, 0.6, 0.6)
    for contour in curve.cut_contours(sheet, params):
        value = curve.period_integral(sheet, contour, params)
        assert abs(2 * value - round(2 * value)) <= 1e-8


def test_empty_contour_period(two_cuts: ModelParams) -> None:
    """A contour enclosing no cut has no period."""
    z1 = curve.branch_points(two_cuts).z1
    center, size = 3 * z1, z1 / 2
    square = [center + size * corner for corner in (1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j)]
    assert curve.period_integral(1, square, two_cuts) == pytest.approx(0, abs=1e-10)


def test_lambda_base_point(two_cuts: ModelParams) -> None:
    """The first primitive vanishes at the outer edge."""
    z1 = curve.branch_points(two_cuts).z1
    assert abs(curve.lambda_value(1, z1, two_cuts)) <= 1e-8


@pytest.mark.slow
def test_lambda_asymptotics(two_cuts: ModelParams) -> None:
    """The first primitive minus its growing part converges at infinity."""
    a, var = two_cuts.a, two_cuts.variance
    remainders = [
        curve.lambda_value(1, z, two_cuts) - (z * z / (2 * var) - a * z / two_cuts.t - math.log(z) / 2)
        for z in (1e2, 1e3, 1e4)
    ]
    assert abs(remainders[2] - remainders[1]) <= 1e-4
    assert abs(remainders[2] - remainders[1]) <= abs(remainders[1] - remainders[0]) + 1e-6


def test_lambda_real_parts_match_on_cut(two_cuts: ModelParams) -> None:
    """On the outer cut the first and third primitives have equal real parts."""
    branch = curve.branch_points(two_cuts)
    for x in np.linspace(branch.z2, branch.z1, 5)[1:-1]:
        values = curve.spectral_curve(two_cuts).lambda_values(complex(x), side=1)
        assert values[0].real == pytest.approx(values[2].real, abs=1e-8)


@pytest.mark.parametrize("edge", ["z1", "z2"])
def test_square_root_behavior(two_cuts: ModelParams, edge: str) -> None:
    """Branches separate like a square root at real edges."""
    expansion = curve.branch_expansion(edge, two_cuts)
    position = curve.branch_points(two_cuts).z1 if edge == "z1" else curve.branch_points(two_cuts).z2
    outward = 1.0 if edge == "z1" else -1.0
    spectral = curve.spectral_curve(two_cuts)
    ratios = []
    for delta in (1e-3, 1e-4, 1e-5):
        xi = spectral.frame(position + outward * delta, side=1).xi
        ratios.append(abs(xi[0] - xi[2]) / (2 * math.sqrt(delta)))
    assert ratios[-1] == pytest.approx(expansion.coefficient, rel=1e-2)
    assert abs(ratios[2] - ratios[1]) < abs(ratios[1] - ratios[0])


def test_edge_missing_in_one_cut(one_cut: ModelParams) -> None:
    """Inner real edges do not exist when the groups have merged."""
    with pytest.raises(errors.DomainError):
        curve.branch_expansion("z2", one_cut)


def test_lambda_grid_marks_cross(one_cut: ModelParams) -> None:
    """Points of the cross are not sampled."""
    xs = np.array([-0.5, 0.0, 0.5])
    ys = np.array([-0.4, 0.0, 0.4])
    grid = curve.lambda_grid(xs, ys, one_cut)
    assert grid.shape == (3, 3)
    assert np.isnan(grid[1, 1])
    assert np.isfinite(grid[0, 0])
    assert np.isfinite(grid[2, 2])
