"""Seed derivation.

Every random stream is keyed by ``(base_seed, module_id, trial_index, stream_id)``
so results do not depend on scheduling or on how many trials run in a batch.
"""
import numpy as np

# module ids
LEVY = 0
DYNAMICS = 1
CONDITIONS = 2
PROBES = 3

# stream ids inside one trial
SMALL_JUMPS = 0
LARGE_JUMPS = 1


def derive_rng(base_seed, *key):
    """Return a fresh ``numpy.random.Generator`` for ``(base_seed, *key)``."""
    ss = np.random.SeedSequence([int(base_seed) & 0xFFFFFFFFFFFFFFFF, *map(int, key)])
    return np.random.Generator(np.random.PCG64(ss))


def trial_streams(base_seed, module_id, trial_index):
    """Independent (small-jump, large-jump) generators for one trial."""
    return (
        derive_rng(base_seed, module_id, trial_index, SMALL_JUMPS),
        derive_rng(base_seed, module_id, trial_index, LARGE_JUMPS),
    )
