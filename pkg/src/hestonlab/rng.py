"""Deterministic random-variate streams for reproducible Monte Carlo.

A RandomSource is a (seed, stream_id) pair mapped onto a counter-based
Philox generator through numpy's SeedSequence spawning. The same pair
always reproduces the same variates on any platform, and distinct
stream_ids give statistically independent streams.

The simulation engines assign paths to fixed-size blocks of
``CHUNK_PATHS`` paths; block c draws from stream_id c. Path i therefore
owns row i % CHUNK_PATHS of block i // CHUNK_PATHS, which makes every
path's variates a pure function of (seed, i) independent of how many
paths are simulated or how blocks are scheduled across threads.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

# Paths per RNG block. Fixed: changing it would change every seeded result.
CHUNK_PATHS = 4096


@dataclass(frozen=True)
class RandomSource:
    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(ss))

    def normals(self, shape) -> np.ndarray:
        """Standard normal variates; identical (seed, stream_id, shape-size)
        always yields the identical array."""
        return self.generator().standard_normal(shape)


def path_chunks(n_p: int):
    """Yield (stream_id, paths_in_chunk) covering n_p paths in fixed blocks."""
    n_chunks = (n_p + CHUNK_PATHS - 1) // CHUNK_PATHS
    for c in range(n_chunks):
        yield c, min(CHUNK_PATHS, n_p - c * CHUNK_PATHS)


def worker_count() -> int:
    """Thread cap for path-parallel work, from HESTON_LAB_THREADS (default 1)."""
    raw = os.environ.get("HESTON_LAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1
