"""Named random sub-streams derived from a single integer seed.

Every randomized step draws from its own stream so that, for example,
adding a policy to an experiment does not shift the sampling draws.
"""

import numpy as np

STREAMS = {
    "synthetic": 1,
    "sampling": 2,
    "sources": 3,
    "workload": 4,
    "preference": 5,
    "potato": 6,
}


def stream(seed: int, name: str, *keys: int) -> np.random.Generator:
    """Return a generator for sub-stream ``name`` of ``seed``.

    ``keys`` further distinguish streams, typically the run index.
    """
    if name not in STREAMS:
        raise KeyError(f"unknown random stream {name!r}")
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, STREAMS[name], *(int(k) for k in keys)]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic child seed, used to hand a run its own seed."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *(int(k) for k in keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)
