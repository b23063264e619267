"""Monte Carlo summaries, variance-versus-horizon scans and bias metrics.

Trajectory procedures follow one protocol: ``run(rng, n)`` returns an array of
``n`` scores, shape ``(n,)`` or ``(n, n_sets)``. :func:`monte_carlo` cuts the
run into seeded batches (see :mod:`neumann_mc.parallel`), reduces every batch
to ``(count, mean, M2)`` right away and merges the triples with a fixed-shape
tree, so memory stays flat and the result does not depend on the worker
count.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .euler import reflected_path
from .parallel import DEFAULT_BATCH, batch_moments, child_seed, combine_moments, map_batches
from .problems import Coefficients


class MonteCarloError(RuntimeError):
    """A trajectory batch failed; the message names the batch size and cause."""


@dataclass(frozen=True)
class McSummary:
    """Sample statistics of a score, one entry per parameter set."""

    n: int
    mean: np.ndarray
    variance: np.ndarray
    std_error: np.ndarray

    @classmethod
    def from_moments(cls, count: int, mean, m2) -> "McSummary":
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        var = np.atleast_1d(np.asarray(m2, dtype=float)) / (count - 1)
        var = np.maximum(var, 0.0)
        return cls(int(count), mean, var, np.sqrt(var / count))

    @classmethod
    def from_samples(cls, values) -> "McSummary":
        values = np.asarray(values, dtype=float)
        if values.shape[0] < 2:
            raise ValueError("need at least two samples")
        return cls.from_moments(*batch_moments(values))


@dataclass(frozen=True)
class _MomentBatch:
    run: Callable

    def __call__(self, rng, size):
        try:
            scores = self.run(rng, size)
        except Exception as exc:  # noqa: BLE001 - re-raised with context
            raise MonteCarloError(f"batch of {size} trajectories failed: {exc!r}") from exc
        return batch_moments(scores)


def monte_carlo(run: Callable, n: int, seed=0, batch_size: int = DEFAULT_BATCH,
                workers: int | None = 1) -> McSummary:
    """Run ``n`` independent trajectories and summarise their scores.

    Identical ``(seed, batch_size)`` give bit-identical summaries for any
    ``workers``.
    """
    if n < 2:
        raise ValueError("monte_carlo needs n >= 2")
    parts = map_batches(_MomentBatch(run), n, seed, batch_size, workers)
    return McSummary.from_moments(*combine_moments(parts))


def variance_scan(run_factory: Callable[[float], Callable], times: Sequence[float], n: int,
                  seed=0, batch_size: int = DEFAULT_BATCH,
                  workers: int | None = 1) -> list[tuple[float, McSummary]]:
    """Summaries at each horizon, with fresh trajectories per horizon."""
    times = [float(t) for t in times]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("times must be strictly increasing")
    return [(t, monte_carlo(run_factory(t), n, child_seed(seed, k), batch_size, workers))
            for k, t in enumerate(times)]


def variance_scan_shared(checkpoint_run: Callable, times: Sequence[float], n: int, seed=0,
                         batch_size: int = DEFAULT_BATCH,
                         workers: int | None = 1) -> list[tuple[float, McSummary]]:
    """Summaries at each horizon read off the same trajectories.

    ``checkpoint_run(rng, n)`` returns scores accumulated up to every horizon,
    shape ``(n, len(times))`` or ``(n, len(times), n_sets)``. One long run
    replaces ``len(times)`` separate ones; the summaries are then correlated
    across horizons, which leaves each of them unbiased.
    """
    times = [float(t) for t in times]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("times must be strictly increasing")
    if n < 2:
        raise ValueError("need n >= 2")
    parts = map_batches(_MomentBatch(checkpoint_run), n, seed, batch_size, workers)
    count, mean, m2 = combine_moments(parts)
    mean = np.asarray(mean)
    m2 = np.asarray(m2)
    return [(t, McSummary.from_moments(count, mean[k], m2[k])) for k, t in enumerate(times)]


def fit_slope(points: Sequence[tuple[float, float]]) -> float:
    """Ordinary least-squares slope of ``v`` against ``T``."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
        raise ValueError("need at least two (T, v) points")
    t, v = arr[:, 0], arr[:, 1]
    dt = t - t.mean()
    sxx = float(dt @ dt)
    if sxx == 0.0:
        raise ValueError("all T are equal; the slope is undefined")
    return float(dt @ (v - v.mean()) / sxx)


def tcheb_points(P: int) -> np.ndarray:
    """The ``P`` Chebyshev-Gauss points ``cos((2i - 1) pi / (2P))``, ``i = 1..P``."""
    if P < 1:
        raise ValueError("P must be at least 1")
    i = np.arange(1, P + 1)
    return np.cos((2 * i - 1) * np.pi / (2 * P))


def tcheb_grid(P: int) -> np.ndarray:
    """``(P, P, 2)`` tensor grid; entry ``[i, j]`` is ``(x_i, x_j)``."""
    x = tcheb_points(P)
    xx, yy = np.meshgrid(x, x, indexing="ij")
    return np.stack([xx, yy], axis=-1)


@dataclass(frozen=True)
class BiasMetrics:
    """Additive offset ``a_bar`` and misfit ``rho`` of a grid estimate."""

    a_bar: float
    rho: float
    grid: np.ndarray


def bias_metrics(u_hat, u_exact, P: int = 3) -> BiasMetrics:
    """Fit ``u_hat ≈ u_exact + a`` on the ``P x P`` Chebyshev grid.

    Parameters
    ----------
    u_hat : (P, P) estimates, ``u_hat[i, j]`` at ``(x_i, x_j)``.
    u_exact : (P, P) array or callable ``u(x, y)`` evaluated on the grid.

    Returns
    -------
    BiasMetrics
        ``a_bar`` is the grid mean of ``u_hat - u_exact`` (the minimiser of the
        discrete cost ``J1``) and ``rho = sqrt(J1(a_bar))``.
    """
    grid = tcheb_grid(P)
    u_hat = np.asarray(u_hat, dtype=float)
    if u_hat.shape != (P, P):
        raise ValueError(f"u_hat must have shape ({P}, {P})")
    exact = u_exact(grid[..., 0], grid[..., 1]) if callable(u_exact) else u_exact
    diff = u_hat - np.asarray(exact, dtype=float)
    a_bar = float(diff.mean())
    rho = float(np.sqrt(np.mean((diff - a_bar) ** 2)))
    return BiasMetrics(a_bar, rho, grid)


@dataclass(frozen=True)
class ParticleCloud:
    """Sample approximating the invariant law; ``provenance`` records its origin."""

    points: np.ndarray
    provenance: str

    def __post_init__(self):
        if self.points.ndim != 2 or self.points.shape[1] != 2 or self.points.shape[0] == 0:
            raise ValueError("a cloud needs a non-empty (q, 2) array of points")

    def __len__(self):
        return self.points.shape[0]

    def mean_of(self, fn) -> float:
        """Cloud average of ``fn(x, y)``."""
        return float(np.mean(fn(self.points[:, 0], self.points[:, 1])))


def sample_invariant_uniform(q: int, rng: np.random.Generator,
                             half_width: float = 1.0) -> ParticleCloud:
    """``q`` i.i.d. uniform points on the square."""
    if q < 1:
        raise ValueError("q must be at least 1")
    return ParticleCloud(rng.uniform(-half_width, half_width, size=(q, 2)), "iid_uniform")


def sample_invariant_path(coeffs: Coefficients, delta: float, q: int,
                          rng: np.random.Generator) -> ParticleCloud:
    """The ``q`` post-step positions of one reflected Euler path from the centre.

    Mixing is the caller's business: ``q * delta`` must be long compared with
    the relaxation time of the dynamics.
    """
    if coeffs.domain.has_dirichlet:
        raise ValueError("the invariant law needs an all-Neumann domain")
    if q < 1 or not delta > 0:
        raise ValueError("need q >= 1 and delta > 0")
    return ParticleCloud(reflected_path(coeffs, delta, q, rng), "long_path")


__all__ = ["McSummary", "MonteCarloError", "monte_carlo", "variance_scan", "variance_scan_shared",
           "fit_slope", "tcheb_points", "tcheb_grid", "BiasMetrics", "bias_metrics",
           "ParticleCloud", "sample_invariant_uniform", "sample_invariant_path"]
