"""Deterministic RNG streams keyed by (seed, purpose, index).

Every concurrent unit of work owns a private stream derived here, so
results never depend on thread scheduling.
"""

import zlib

import numpy as np


def stream_keys(*keys):
    ints = []
    for k in keys:
        if isinstance(k, str):
            ints.append(zlib.crc32(k.encode("utf-8")))
        else:
            ints.append(int(k) & 0xFFFFFFFF)
    return ints


def derive_rng(*keys):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(stream_keys(*keys))))
