"""Deterministic seed derivation.

Every random quantity in the package is derived from a single 64-bit master
seed through a tree of named sub-streams.  Streams are addressed by a path of
ints and strings, so sample i of a batch gets the same stream regardless of
batch size, thread count, or the order in which other streams are consumed.
"""

from __future__ import annotations

import hashlib

import numpy as np
from numpy.random import Generator, PCG64, SeedSequence


def _key_int(item) -> int:
    if isinstance(item, (int, np.integer)):
        if item < 0:
            raise ValueError(f"stream path ints must be nonnegative, got {item}")
        return int(item)
    if isinstance(item, str):
        digest = hashlib.blake2b(item.encode(), digest_size=8).digest()
        return int.from_bytes(digest, "little")
    raise TypeError(f"stream path items must be int or str, got {type(item)!r}")


def subseq(root: SeedSequence, *path) -> SeedSequence:
    """Child SeedSequence at a named path below ``root``."""
    key = tuple(_key_int(p) for p in path)
    return SeedSequence(entropy=root.entropy, spawn_key=tuple(root.spawn_key) + key)


def stream(root: SeedSequence, *path) -> Generator:
    """Fresh Generator for the sub-stream at ``path``."""
    return Generator(PCG64(subseq(root, *path)))


def root_seed(seed: int) -> SeedSequence:
    return SeedSequence(int(seed))
