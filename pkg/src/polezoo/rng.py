"""Seedable randomness for the whole package.

Every stochastic routine takes an explicit `numpy.random.Generator` built on
the PCG64 bit generator. PCG64 is the one named algorithm used everywhere:
the same 64-bit seed always yields the same stream, so training runs,
evaluations and CLI commands are reproducible bit for bit.

Derived seeds (one per zoo agent, per evaluation, per sweep point) come from
`numpy.random.SeedSequence`, which is stable across platforms and releases.
"""

from __future__ import annotations

import numpy as np

# Tags for tagged_rng so independent uses of one stored seed never collide.
EVAL_STREAM = 1
BUDGET_STREAM = 2
SAMPLE_STREAM = 3


def make_rng(seed: int) -> np.random.Generator:
    """Generator seeded with PCG64; identical seed => identical stream."""
    return np.random.Generator(np.random.PCG64(seed))


def child_seeds(master_seed: int, n: int) -> np.ndarray:
    """n distinct uint64 seeds derived deterministically from a master seed."""
    return np.random.SeedSequence(master_seed).generate_state(n, np.uint64)


def tagged_rng(seed: int, *key: int) -> np.random.Generator:
    """Generator for a named sub-stream of `seed` (e.g. evaluation vs training)."""
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(entropy=int(seed), spawn_key=key))
    )
