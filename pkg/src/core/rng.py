"""
Splittable random streams and ordered parallel mapping

All randomness flows through explicit RngStream values. A stream is a seed
plus a spawn path; children are derived deterministically so results never
depend on scheduling or thread count.
"""

import logging
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

MAX_SEED = 2**64 - 1


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream identified by (seed, path)."""

    seed: int
    path: Tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= self.seed <= MAX_SEED:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)

    def generator(self) -> np.random.Generator:
        """A fresh numpy Generator positioned at the start of this stream."""
        return np.random.Generator(np.random.PCG64(self.seed_sequence()))

    def spawn(self, count: int) -> List["RngStream"]:
        """`count` independent child streams."""
        return [RngStream(self.seed, self.path + (i,)) for i in range(count)]

    def child(self, label: str) -> "RngStream":
        """Child stream keyed by a stable hash of `label`."""
        return RngStream(self.seed, self.path + (zlib.crc32(label.encode("utf-8")),))

    def describe(self) -> dict:
        return {"seed": self.seed, "path": list(self.path)}


def as_generator(rng) -> np.random.Generator:
    """Accept an RngStream or an existing Generator."""
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


def as_stream(rng_state) -> RngStream:
    """
    Accept an RngStream or an integer seed.

    Chunked and replica work spawns substreams, which a bare Generator
    cannot provide without forking its state, so Generators are rejected.
    """
    if isinstance(rng_state, RngStream):
        return rng_state
    if isinstance(rng_state, (int, np.integer)) and not isinstance(rng_state, bool):
        return RngStream(int(rng_state))
    raise TypeError(f"expected RngStream or integer seed, got {type(rng_state).__name__}")


def resolve_threads(threads: Optional[int]) -> int:
    if threads is None or threads <= 0:
        return os.cpu_count() or 1
    return threads


def parallel_map(fn: Callable[[T], R], items: Sequence[T], threads: Optional[int] = None) -> List[R]:
    """
    Apply fn to every item, possibly concurrently, returning results in input order.

    Args:
        fn: Work function (must be reentrant)
        items: Work items
        threads: Worker cap (None or 0 = available cores)

    Returns:
        List of results aligned with items
    """
    workers = min(resolve_threads(threads), max(len(items), 1))
    if workers == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def chunk_sizes(total: int, chunk: int) -> List[int]:
    """Split `total` draws into fixed-size chunks (last one may be short)."""
    if total <= 0:
        return []
    sizes = [chunk] * (total // chunk)
    if total % chunk:
        sizes.append(total % chunk)
    return sizes
