"""Deterministic seed derivation for nested (int, str) seed keys.

numpy SeedSequence accepts integer tuples only, and Python's built-in hash
of strings changes between processes, so string components are folded in
with crc32. Same key -> same stream on every platform and run.
"""

import zlib

import numpy as np


def seed_key(*parts):
    """Flatten nested ints/strings into a tuple of uint32-safe integers."""
    out = []
    for p in parts:
        if isinstance(p, (tuple, list)):
            out.extend(seed_key(*p))
        elif isinstance(p, str):
            out.append(zlib.crc32(p.encode()))
        elif isinstance(p, (int, np.integer)):
            out.append(int(p) & 0xFFFFFFFF)
        else:
            raise TypeError(f"seed parts must be ints or strings, got {type(p)}")
    return tuple(out)


def rng_from(*parts):
    return np.random.default_rng(seed_key(*parts))
