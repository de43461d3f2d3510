"""Seeded, splittable random streams.

Every random draw in the package comes from a Philox (counter-based)
generator keyed by ``(seed, path)``. A sub-circuit or Monte Carlo chunk
derives its stream from its position in the computation, not from the
order in which work is scheduled, so results do not depend on how many
workers run it.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

SEED_ENV = "LATTICEPERM_SEED"


@dataclass(frozen=True)
class RngSeed:
    seed: int
    stream: tuple[int, ...] = ()

    def __post_init__(self):
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def child(self, *ids: int) -> RngSeed:
        return RngSeed(self.seed, self.stream + tuple(int(i) for i in ids))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.stream)
        return np.random.Generator(np.random.Philox(ss))


def as_seed(seed: RngSeed | int | None) -> RngSeed:
    if isinstance(seed, RngSeed):
        return seed
    return RngSeed(resolve_seed(seed))


def resolve_seed(seed: int | None) -> int:
    """Explicit seed, else ``$LATTICEPERM_SEED``, else 0."""
    if seed is not None:
        return int(seed)
    env = os.environ.get(SEED_ENV)
    return int(env) if env else 0
