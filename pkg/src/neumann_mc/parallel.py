"""Reproducible fan-out of trajectory batches.

A run of ``n`` trajectories is cut into fixed-size batches. Batch ``k`` gets
its own ``numpy.random.Generator`` spawned from ``SeedSequence(seed)``, so the
stream a trajectory sees depends only on ``(seed, batch_size, k)`` and never on
how many worker processes execute the batches. Results come back in batch
order, which keeps every reduction downstream deterministic.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence

import numpy as np

DEFAULT_BATCH = 2048


def batch_sizes(n: int, batch_size: int = DEFAULT_BATCH) -> list[int]:
    if n < 1:
        raise ValueError("need at least one trajectory")
    full, rest = divmod(n, batch_size)
    return [batch_size] * full + ([rest] if rest else [])


def spawn_generators(seed, count: int) -> list[np.random.Generator]:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.PCG64(child)) for child in ss.spawn(count)]


def child_seed(seed, *keys: int) -> np.random.SeedSequence:
    """Derive an independent seed sequence for a sub-task such as a grid node."""
    keys = tuple(int(k) for k in keys)
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + keys)
    return np.random.SeedSequence(seed, spawn_key=keys)


def default_workers() -> int:
    return os.cpu_count() or 1


def _call(args):
    fn, rng, size = args
    return fn(rng, size)


def map_batches(fn: Callable[[np.random.Generator, int], object], n: int, seed,
                batch_size: int = DEFAULT_BATCH, workers: int | None = 1) -> list:
    """Run ``fn(rng, size)`` on every batch and return the results in batch order.

    ``fn`` must be picklable when ``workers > 1`` (a module-level function or a
    ``functools.partial`` of one).
    """
    sizes = batch_sizes(n, batch_size)
    rngs = spawn_generators(seed, len(sizes))
    jobs = list(zip([fn] * len(sizes), rngs, sizes))
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(jobs) == 1:
        return [_call(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call, jobs))


def combine_moments(parts: Sequence[tuple[int, np.ndarray, np.ndarray]]):
    """Merge ``(count, mean, M2)`` triples with a fixed-shape pairwise tree.

    ``M2`` is the sum of squared deviations from the mean. The tree shape only
    depends on ``len(parts)``, so the result is bit-identical for any worker
    count.
    """
    level = [(int(c), np.asarray(m, float), np.asarray(s, float)) for c, m, s in parts]
    if not level:
        raise ValueError("nothing to combine")
    while len(level) > 1:
        nxt = []
        for i in range(0, len(level) - 1, 2):
            (na, ma, sa), (nb, mb, sb) = level[i], level[i + 1]
            n = na + nb
            delta = mb - ma
            nxt.append((n, ma + delta * (nb / n), sa + sb + delta * delta * (na * nb / n)))
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


def batch_moments(values: np.ndarray) -> tuple[int, np.ndarray, np.ndarray]:
    """Two-pass ``(count, mean, M2)`` of a batch along axis 0."""
    values = np.asarray(values, dtype=float)
    mean = values.mean(axis=0)
    dev = values - mean
    return values.shape[0], mean, np.einsum("i...,i...->...", dev, dev)
