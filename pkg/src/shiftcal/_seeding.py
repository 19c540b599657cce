"""Deterministic derivation of independent random streams.

Every stochastic component in the pipeline (data generation, prior draws,
simulator calls, MH proposals, ...) pulls its randomness from a stream
derived by hashing a master seed together with a purpose tag and, where
needed, indices or float arguments.  Streams are therefore independent of
evaluation order, which keeps results identical whether stages run
serially or concurrently.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(*parts) -> int:
    """Hash (seed, tag, index, ...) parts into a 64-bit stream seed.

    Accepted part types: int, float, str, bytes, and float sequences /
    arrays.  Type tags are mixed into the hash so e.g. 1 and 1.0 derive
    different streams.
    """
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        if isinstance(part, (bytes, bytearray)):
            h.update(b"b")
            h.update(part)
        elif isinstance(part, str):
            h.update(b"s")
            h.update(part.encode())
        elif isinstance(part, (bool, int, np.integer)):
            h.update(b"i")
            h.update(int(part).to_bytes(16, "little", signed=True))
        elif isinstance(part, (float, np.floating)):
            h.update(b"f")
            h.update(np.float64(part).tobytes())
        elif isinstance(part, (tuple, list, np.ndarray)):
            arr = np.ascontiguousarray(part, dtype=np.float64)
            h.update(b"a")
            h.update(arr.tobytes())
        else:
            raise TypeError(f"cannot derive a seed from {type(part).__name__}")
    return int.from_bytes(h.digest(), "little")


def derive_rng(*parts) -> np.random.Generator:
    """Independent generator for the stream identified by ``parts``."""
    return np.random.default_rng(derive_seed(*parts))
