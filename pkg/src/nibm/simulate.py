"""Rejection sampling of non-intersecting Brownian bridges.

Each proposal is a bundle of `n` independent bridges with variance `1/n` per
unit time: `n/2` of them go from `-a` to `-b` and `n/2` from `a` to `b`. A
bundle is accepted when the paths are strictly ordered at every interior grid
time. Paths of one group share both end points, so they are relabelled by
their order at the first interior time before the test.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from humanize import intcomma, naturaldelta, naturalsize
from scipy.integrate import cumulative_trapezoid

from nibm.curve import ModelParams
from nibm.errors import DomainError, InfeasibleError
from nibm.kernel import BiorthogonalSystem, diagonal_density

logger = logging.getLogger(__name__)

MAX_PATHS = 8
"""Largest number of paths accepted by the sampler."""
MIN_STEPS = 50
"""Smallest number of time steps."""

_BATCH_BYTES = 32 * 2**20
_PROBE_BATCHES = 8
_MIN_RATE = 1e-6


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Accepted bundles of non-intersecting paths."""

    a: float
    b: float
    n: int
    steps: int
    times: np.ndarray
    """Grid times `0 = t_0 < ... < t_m = 1`."""
    samples: np.ndarray
    """Positions, of shape `(count, n, steps + 1)`, ordered by path within each bundle."""
    seed: int
    proposed: int
    """Number of proposed bundles."""
    accepted: int
    """Number of accepted bundles (may exceed the number kept)."""

    @property
    def acceptance_rate(self) -> float:
        """Fraction of accepted proposals."""
        return self.accepted / self.proposed if self.proposed else 0.0

    def nearest_time(self, t: float) -> int:
        """Index of the grid time closest to `t`."""
        return int(np.argmin(np.abs(self.times - t)))

    def positions(self, t: float) -> np.ndarray:
        """Positions of all paths at the grid time closest to `t`, of shape `(count, n)`."""
        return self.samples[:, :, self.nearest_time(t)]

    def metadata(self) -> dict[str, object]:
        """Return JSON-ready metadata."""
        return {
            "a": self.a,
            "b": self.b,
            "n": self.n,
            "steps": self.steps,
            "count": int(self.samples.shape[0]),
            "seed": self.seed,
            "proposed": self.proposed,
            "accepted": self.accepted,
            "acceptance_rate": self.acceptance_rate,
        }


@dataclass(frozen=True)
class Histogram:
    """Normalized histogram of positions."""

    edges: np.ndarray
    mass: np.ndarray
    """Probability of each bin, summing to one."""
    t: float
    """Grid time actually used."""

    @property
    def density(self) -> np.ndarray:
        """Mass divided by bin width."""
        return self.mass / np.diff(self.edges)


def _end_points(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    half = n // 2
    start = np.concatenate([np.full(half, -a), np.full(half, a)])
    end = np.concatenate([np.full(half, -b), np.full(half, b)])
    return start, end


def _propose(
    rng: np.random.Generator,
    size: int,
    start: np.ndarray,
    end: np.ndarray,
    times: np.ndarray,
) -> np.ndarray:
    n, steps = start.size, times.size - 1
    increments = rng.normal(0.0, math.sqrt(1 / (n * steps)), size=(size, n, steps))
    walk = np.concatenate([np.zeros((size, n, 1)), np.cumsum(increments, axis=2)], axis=2)
    drift = (end - start)[None, :, None] - walk[:, :, -1:]
    return start[None, :, None] + walk + times[None, None, :] * drift


def _accept(bundles: np.ndarray) -> np.ndarray:
    # Relabel within each group by order at the first interior time.
    half = bundles.shape[1] // 2
    for group in (slice(0, half), slice(half, None)):
        block = bundles[:, group, :]
        order = np.argsort(block[:, :, 1], axis=1)
        bundles[:, group, :] = np.take_along_axis(block, order[:, :, None], axis=1)
    interior = bundles[:, :, 1:-1]
    mask = np.all(np.diff(interior, axis=1) > 0, axis=(1, 2))
    return mask


def _run_batch(
    seed: np.random.SeedSequence,
    size: int,
    start: np.ndarray,
    end: np.ndarray,
    times: np.ndarray,
) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(seed))
    bundles = _propose(rng, size, start, end, times)
    return bundles[_accept(bundles)]


def _sample(
    a: float,
    b: float,
    n: int,
    steps: int,
    count: int,
    seed: int,
    threads: int = 1,
    max_proposals: int = 10**8,
) -> PathEnsemble:
    if not (a > 0 and b > 0):
        raise DomainError("a and b must be positive", a=a, b=b)
    if n <= 0 or n % 2 or n > MAX_PATHS:
        raise DomainError(f"the sampler needs an even number of paths at most {MAX_PATHS}", n=n)
    if steps < MIN_STEPS:
        raise DomainError(f"the sampler needs at least {MIN_STEPS} steps", steps=steps)
    if count < 1:
        raise DomainError("the sample count must be positive", count=count)
    start_time = time.perf_counter()
    times = np.linspace(0.0, 1.0, steps + 1)
    start, end = _end_points(a, b, n)
    size = max(1, _BATCH_BYTES // (8 * n * (steps + 1)))
    logger.debug(f"batches of {intcomma(size)} bundles ({naturalsize(8 * size * n * (steps + 1))})")
    root = np.random.SeedSequence(seed)
    kept: list[np.ndarray] = []
    total = proposed = 0
    with ThreadPoolExecutor(max_workers=threads) as executor:
        while total < count:
            children = root.spawn(threads)
            batches = list(executor.map(lambda child: _run_batch(child, size, start, end, times), children))
            for batch in batches:
                kept.append(batch)
                total += batch.shape[0]
                proposed += size
            probed = proposed >= _PROBE_BATCHES * size
            if probed and (total == 0 or total < _MIN_RATE * proposed):
                raise InfeasibleError(
                    f"acceptance rate below {_MIN_RATE:g} after {intcomma(proposed)} proposals: "
                    "reduce n or increase a*b",
                    a=a,
                    b=b,
                    n=n,
                    steps=steps,
                )
            if proposed >= max_proposals and total < count:
                raise InfeasibleError(
                    f"only {intcomma(total)} of {intcomma(count)} bundles after {intcomma(proposed)} proposals",
                    a=a,
                    b=b,
                    n=n,
                    steps=steps,
                )
    samples = np.concatenate(kept)[:count]
    elapsed = time.perf_counter() - start_time
    logger.info(
        f"sampled {intcomma(count)} bundles of {n} paths from {intcomma(proposed)} proposals "
        f"in {naturaldelta(elapsed, minimum_unit='milliseconds')}",
    )
    return PathEnsemble(
        a=a,
        b=b,
        n=n,
        steps=steps,
        times=times,
        samples=samples,
        seed=seed,
        proposed=proposed,
        accepted=total,
    )


def sample_ensemble(
    params: ModelParams,
    m: int = 500,
    count: int = 1000,
    seed: int = 0,
    threads: int = 1,
    max_proposals: int = 10**8,
) -> PathEnsemble:
    """Sample bundles of non-intersecting bridges.

    Parameters:
        params: Model parameters, with `n` set (at most 8).
        m: Number of time steps (at least 50).
        count: Number of bundles to keep.
        seed: Seed of the random streams. Batch `k` uses the `k`-th spawned stream,
            so the kept bundles do not depend on `threads`.
        threads: Worker threads.
        max_proposals: Proposal budget.

    Raises:
        DomainError: When `n` or `m` is out of range.
        InfeasibleError: When the acceptance rate is too small.

    Returns:
        The ensemble.
    """
    if params.n is None:
        raise DomainError("the number of paths must be set", **params.as_dict())
    return _sample(params.a, params.b, params.n, m, count, seed, threads, max_proposals)


def acceptance_rate(
    a: float,
    b: float,
    n: int,
    m: int,
    probe: int,
    seed: int = 0,
) -> float:
    """Acceptance rate over a probe of proposals, without raising on low rates."""
    if n <= 0 or n % 2:
        raise DomainError("the number of paths must be even and positive", n=n)
    times = np.linspace(0.0, 1.0, m + 1)
    start, end = _end_points(a, b, n)
    size = max(1, _BATCH_BYTES // (8 * n * (m + 1)))
    accepted = done = 0
    for child in np.random.SeedSequence(seed).spawn(math.ceil(probe / size)):
        batch = min(size, probe - done)
        rng = np.random.Generator(np.random.PCG64(child))
        accepted += int(_accept(_propose(rng, batch, start, end, times)).sum())
        done += batch
    return accepted / probe


def noncrossing_probability(params: ModelParams) -> float:
    """Probability `1 - exp(-4 n a b)` that two bridges do not meet (`n = 2`)."""
    if params.n != 2:
        raise DomainError("the closed form holds for two paths only", **params.as_dict())
    return -math.expm1(-4 * params.n * params.a * params.b)


def marginal_histogram(ensemble: PathEnsemble, t: float, bins: int | Sequence[float] = 50) -> Histogram:
    """Normalized histogram of all positions at the grid time closest to `t`."""
    index = ensemble.nearest_time(t)
    if ensemble.times[index] != t:
        logger.debug(f"histogram time {t} snapped to grid time {ensemble.times[index]}")
    positions = ensemble.samples[:, :, index].ravel()
    counts, edges = np.histogram(positions, bins=bins)
    return Histogram(edges=edges, mass=counts / positions.size, t=float(ensemble.times[index]))


def kernel_cdf(system: BiorthogonalSystem, xs: Sequence[float], threads: int = 1) -> np.ndarray:
    """Cumulative distribution of the finite-n density `K_n(x, x) / n` on ascending points."""
    xs = np.asarray(xs, dtype=float)
    values = diagonal_density(xs, system, threads)
    cdf = cumulative_trapezoid(values, xs, initial=0.0)
    return cdf / cdf[-1]


def figure_paths(
    a: float,
    b: float,
    n: int,
    m: int = 500,
    count: int = 10,
    seed: int = 0,
    threads: int = 1,
) -> PathEnsemble:
    """Bundles for plotting, including the unvalidated critical separation `a * b = 1/2`."""
    if math.isclose(a * b, 0.5):
        logger.warning("a*b = 1/2 is a critical separation: paths are emitted for comparison only")
    elif a * b > 0.5:
        logger.info("a*b > 1/2: the two groups stay separated")
    return _sample(a, b, n, m, count, seed, threads)


def polyline_rows(ensemble: PathEnsemble) -> list[tuple[int, int, float, float]]:
    """Rows `(bundle_id, path_id, time, position)` of all kept bundles."""
    rows = []
    for bundle, paths in enumerate(ensemble.samples):
        for path, positions in enumerate(paths):
            rows.extend(
                (bundle, path, float(time_), float(position))
                for time_, position in zip(ensemble.times, positions, strict=True)
            )
    return rows
