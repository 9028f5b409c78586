"""Tests for the `simulate` module."""

from __future__ import annotations

import math
from typing import TYPE_CHECKING

import numpy as np
import pytest
from scipy import stats

from nibm import errors, kernel, simulate
from nibm.curve import ModelParams

if TYPE_CHECKING:
    from collections.abc import Callable

# Shift of an absorbing barrier that corrects for monitoring on a grid.
_GRID_SHIFT = 0.5826


def test_bundles_are_ordered() -> None:
    """Kept bundles are strictly ordered at interior times and pinned at the ends."""
    ensemble = simulate.sample_ensemble(ModelParams(1.0, 0.7, 0.5, 4), m=50, count=20, seed=1)
    assert ensemble.samples.shape == (20, 4, 51)
    assert np.all(np.diff(ensemble.samples[:, :, 1:-1], axis=1) > 0)
    np.testing.assert_allclose(ensemble.samples[:, :, 0], [[-1, -1, 1, 1]] * 20)
    np.testing.assert_allclose(ensemble.samples[:, :, -1], [[-0.7, -0.7, 0.7, 0.7]] * 20, atol=1e-12)


def test_separated_groups() -> None:
    """With `a * b > 1/2` the two groups never meet."""
    ensemble = simulate.figure_paths(1.0, 0.7, 4, m=50, count=20, seed=2)
    lower = ensemble.samples[:, :2, 1:-1].max(axis=1)
    upper = ensemble.samples[:, 2:, 1:-1].min(axis=1)
    separated = np.all(lower < upper, axis=1)
    assert separated.mean() >= 0.99


def test_critical_separation_for_figures(caplog: pytest.LogCaptureFixture) -> None:
    """Figures accept the critical separation, with a warning.

    Parameters:
        caplog: Pytest fixture to capture logs.
    """
    ensemble = simulate.figure_paths(1.0, 0.5, 2, m=50, count=5, seed=0)
    assert ensemble.samples.shape[0] == 5
    assert "critical separation" in caplog.text


def test_reproducible() -> None:
    """Kept bundles depend on the seed only."""
    params = ModelParams(0.6, 0.6, 0.5, 2)
    first = simulate.sample_ensemble(params, m=100, count=300, seed=7)
    again = simulate.sample_ensemble(params, m=100, count=300, seed=7, threads=3)
    other = simulate.sample_ensemble(params, m=100, count=300, seed=8)
    np.testing.assert_array_equal(first.samples, again.samples)
    assert not np.array_equal(first.samples, other.samples)


@pytest.mark.parametrize(
    ("a", "b"),
    [(0.3, 0.3), (0.2, 0.5)],
)
def test_two_path_acceptance(a: float, b: float) -> None:
    """The acceptance rate of two paths matches the closed form, corrected for grid monitoring."""
    m, n = 400, 2
    rate = simulate.acceptance_rate(a, b, n, m, probe=20_000, seed=3)
    assert simulate.noncrossing_probability(ModelParams(a, b, 0.5, n)) == pytest.approx(-math.expm1(-8 * a * b))
    sigma = math.sqrt(2 / n)
    shift = _GRID_SHIFT * sigma * math.sqrt(1 / m)
    expected = -math.expm1(-2 * (2 * a + shift) * (2 * b + shift) / sigma**2)
    assert rate == pytest.approx(expected, abs=0.015)


def test_acceptance_decreases_with_paths() -> None:
    """More paths are harder to keep apart."""
    rates = [simulate.acceptance_rate(1.0, 0.7, n, 50, probe=4000, seed=0) for n in (2, 4)]
    assert rates[0] > rates[1] > 0


def _kernel_law(params: ModelParams) -> Callable[[np.ndarray], np.ndarray]:
    xs = np.linspace(-4, 4, 801)
    cdf = simulate.kernel_cdf(kernel.biorthogonal_system(params), xs)
    return lambda x: np.interp(x, xs, cdf)


@pytest.mark.parametrize(
    ("params", "m", "count"),
    [(ModelParams(0.6, 0.6, 0.45, 2), 500, 5000), (ModelParams(1.0, 0.7, 0.5, 4), 100, 1000)],
)
def test_law_of_positions(params: ModelParams, m: int, count: int) -> None:
    """Positions follow the finite-n kernel density."""
    ensemble = simulate.sample_ensemble(params, m=m, count=count, seed=11)
    positions = ensemble.positions(params.t).ravel()
    assert stats.kstest(positions, _kernel_law(params)).pvalue > 1e-3


def test_mirror_symmetry() -> None:
    """Positions are symmetric under `x -> -x`."""
    ensemble = simulate.sample_ensemble(ModelParams(1.0, 0.7, 0.3, 4), m=100, count=1000, seed=5)
    positions = ensemble.positions(0.3).ravel()
    assert stats.ks_2samp(positions, -positions).pvalue > 1e-3


def test_time_reversal() -> None:
    """Swapping `a` and `b` mirrors the law in time."""
    forward = simulate.sample_ensemble(ModelParams(1.0, 0.7, 0.3, 4), m=100, count=1000, seed=12)
    backward = simulate.sample_ensemble(ModelParams(0.7, 1.0, 0.7, 4), m=100, count=1000, seed=13)
    assert stats.ks_2samp(forward.positions(0.3).ravel(), backward.positions(0.7).ravel()).pvalue > 1e-3


def test_histogram() -> None:
    """Histograms are normalized and snapped to the grid."""
    ensemble = simulate.sample_ensemble(ModelParams(0.6, 0.6, 0.5, 2), m=100, count=200, seed=0)
    histogram = simulate.marginal_histogram(ensemble, 0.333, bins=20)
    assert histogram.mass.sum() == pytest.approx(1)
    assert histogram.t == pytest.approx(0.33)
    assert histogram.edges.size == 21
    assert histogram.density @ np.diff(histogram.edges) == pytest.approx(1)


def test_polylines() -> None:
    """Every kept position becomes a row."""
    ensemble = simulate.sample_ensemble(ModelParams(0.6, 0.6, 0.5, 2), m=50, count=3, seed=0)
    rows = simulate.polyline_rows(ensemble)
    assert len(rows) == 3 * 2 * 51
    assert rows[0] == (0, 0, 0.0, -0.6)
    metadata = ensemble.metadata()
    assert metadata["count"] == 3
    assert 0 < metadata["acceptance_rate"] <= 1


def test_infeasible() -> None:
    """Hopeless configurations stop with guidance."""
    with pytest.raises(errors.InfeasibleError):
        simulate.sample_ensemble(ModelParams(0.2, 0.2, 0.5, 6), m=50, count=10**6, max_proposals=1000)


@pytest.mark.parametrize(
    ("n", "m"),
    [(3, 100), (10, 100), (2, 10)],
)
def test_invalid_sizes(n: int, m: int) -> None:
    """Path counts and step counts are bounded."""
    with pytest.raises(errors.DomainError):
        simulate.figure_paths(0.6, 0.6, n, m=m, count=1)


def test_closed_form_needs_two_paths() -> None:
    """The non-crossing probability is only known for two paths."""
    with pytest.raises(errors.DomainError):
        simulate.noncrossing_probability(ModelParams(0.6, 0.6, 0.5, 4))
