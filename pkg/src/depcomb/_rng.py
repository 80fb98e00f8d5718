"""Named, hierarchical random streams derived from one integer seed.

Every random draw in the package goes through :func:`stream`, so results
depend only on the seed and the key path, never on call order or on how
work is split across threads.
"""
import zlib

import numpy as np

#: Replicates are grouped into fixed-size chunks that share one stream.
CHUNK = 1024


def _key(part):
    if isinstance(part, str):
        return zlib.crc32(part.encode())
    part = int(part)
    if part < 0:
        raise ValueError("stream keys must be non-negative")
    return part


def stream(seed, *keys):
    """Return a Generator keyed by ``(seed, *keys)``."""
    entropy = [_key(seed)] + [_key(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(seed, *keys):
    """An integer seed for a sub-computation keyed by ``(seed, *keys)``."""
    return int(stream(seed, "derive", *keys).integers(2 ** 62))
