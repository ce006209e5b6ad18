"""Seeded, splittable random streams for reproducible simulation."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, TypeVar

import numpy as np

from ..conf import psr_setting
from ..exceptions import InvalidParameterError

logger = logging.getLogger(__name__)

T = TypeVar("T")

# Stream codes; part of every shard's spawn key.
EVENT_STREAM = 0
SCHEME_STREAM = 1
COVARIATE_STREAM = 2
OUTER_STREAM = 3
BOOTSTRAP_STREAM = 4


@dataclass(frozen=True, slots=True)
class Shard:
    index: int
    start: int
    stop: int

    @property
    def size(self) -> int:
        return self.stop - self.start


class SeededStreams:
    """
    One seed, many independent generators.

    A generator is identified by ``(stream, shard)``; work is cut into
    fixed-size shards so the draws do not depend on how many threads run
    them. The scheme stream can be re-seeded on its own, which leaves the
    event-time draws untouched.
    """

    def __init__(self, seed: int, scheme_seed: int | None = None) -> None:
        if seed is None or int(seed) < 0:
            raise InvalidParameterError(f"seed must be a nonnegative integer, got {seed!r}")
        self._seed = int(seed)
        self._scheme_seed = self._seed if scheme_seed is None else int(scheme_seed)

    @property
    def seed(self) -> int:
        return self._seed

    @property
    def scheme_seed(self) -> int:
        return self._scheme_seed

    def sequence(self, stream: int, shard: int = 0) -> np.random.SeedSequence:
        entropy = self._scheme_seed if stream == SCHEME_STREAM else self._seed
        return np.random.SeedSequence(entropy, spawn_key=(stream, shard))

    def generator(self, stream: int, shard: int = 0) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.sequence(stream, shard)))

    def fork(self, index: int) -> SeededStreams:
        """Child streams for replicate ``index`` (bootstrap, repeated runs)."""
        child = self.sequence(BOOTSTRAP_STREAM, index).generate_state(2)
        return SeededStreams(int(child[0]), int(child[1]))


def shards(n: int, shard_size: int | None = None) -> list[Shard]:
    size = int(shard_size or psr_setting("SHARD_SIZE"))
    if size < 1:
        raise InvalidParameterError("shard size must be positive")
    return [Shard(index, start, min(start + size, n)) for index, start in enumerate(range(0, n, size))]


def resolve_threads(threads: int | None = None) -> int:
    value = threads if threads is not None else psr_setting("THREADS")
    try:
        value = int(value)
    except (TypeError, ValueError):
        raise InvalidParameterError(f"thread count must be an integer, got {value!r}") from None
    if value < 1:
        raise InvalidParameterError("thread count must be positive")
    return value


def map_shards(func: Callable[[Shard], T], work: list[Shard], threads: int | None = None) -> list[T]:
    """Apply ``func`` to every shard and return results in shard order."""
    threads = resolve_threads(threads)
    if threads == 1 or len(work) <= 1:
        return [func(shard) for shard in work]
    logger.debug("Running %d shards on %d threads", len(work), threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, work))
