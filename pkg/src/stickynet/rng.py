"""Deterministic splittable seeding for parallel Monte Carlo.

Every experiment derives its randomness from a (master_seed, stream_id)
pair through numpy's SeedSequence, so replicas parallelize by stream id and
results are independent of execution order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence((self.master_seed, self.stream_id))
        return np.random.Generator(np.random.PCG64(seq))

    def stream(self, stream_id: int) -> "SeedSpec":
        return SeedSpec(self.master_seed, stream_id)


def as_generator(seed) -> np.random.Generator:
    """Accept a SeedSpec, an integer master seed, or a ready Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, SeedSpec):
        return seed.generator()
    return SeedSpec(int(seed)).generator()
