"""Seeded random streams.

Every randomized operation in the package draws from a Philox generator
(counter-based) keyed by a master seed plus a tuple of integer stream
labels. Two calls with the same labels always produce the same stream, and
different labels give statistically independent streams, so a scan can be
replayed cell by cell in any order.
"""
from __future__ import annotations

import numpy as np


def stream(seed: int, *labels: int) -> np.random.Generator:
    """Return the generator for ``(seed, *labels)``."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(v) & 0xFFFFFFFF for v in labels]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


# Stream label namespaces, so that e.g. roughness and plaintexts never collide.
ROUGHNESS = 1
NOISE = 2
PLAINTEXT = 3
TVLA = 4
ATTACK = 5
