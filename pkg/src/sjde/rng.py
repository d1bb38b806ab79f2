"""Deterministic derivation of independent random streams.

Every Monte Carlo unit of work (a trial, a grid point, a stage-cost
evaluation) gets its own generator derived from the master seed plus a tag
path, so results are reproducible bit-for-bit regardless of execution order
or worker count.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream_seed(master_seed: int, *tags: int | str) -> int:
    """Collapse ``(master_seed, tags...)`` into a 128-bit entropy value.

    Tags are short purpose labels and indices, e.g. ``("trial", 4)``.
    The mapping is platform independent (SHA-256 over the canonical repr).
    """
    material = repr((int(master_seed),) + tuple(tags)).encode("utf-8")
    return int.from_bytes(hashlib.sha256(material).digest()[:16], "big")


def substream(master_seed: int, *tags: int | str) -> np.random.Generator:
    """Independent generator for one unit of work."""
    return np.random.default_rng(np.random.SeedSequence(stream_seed(master_seed, *tags)))
