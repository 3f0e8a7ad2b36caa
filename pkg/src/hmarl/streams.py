"""Deterministic, counter-derived random streams.

Every random draw in a run is keyed by a tuple of integers (round, profile,
agent, episode, tag) mixed with the master seed through
:class:`numpy.random.SeedSequence`.  Streams are independent of the order in
which they are requested, so batched and sequential evaluation see the same
numbers.
"""

from __future__ import annotations

import numpy as np

# Stream tags.  Values are part of the on-disk reproducibility contract.
TAG_HALLUCINATE = 1
TAG_ETA = 2
TAG_ENV = 3
TAG_SAMPLE = 4
TAG_TRUE_VALUE = 5
TAG_HEDGE = 6
TAG_DATA = 7


def derive_seed_sequence(master: int, *key: int) -> np.random.SeedSequence:
    if master < 0 or any(k < 0 for k in key):
        raise ValueError("stream keys must be non-negative integers")
    return np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(k) for k in key))


def derive(master: int, *key: int) -> np.random.Generator:
    """Return a generator for the stream identified by ``key``.

    >>> a = derive(7, 1, 2).standard_normal(3)
    >>> b = derive(7, 1, 2).standard_normal(3)
    >>> bool((a == b).all())
    True
    """
    return np.random.Generator(np.random.PCG64(derive_seed_sequence(master, *key)))


def gaussian_block(master: int, key: tuple[int, ...], shape: tuple[int, ...], std) -> np.ndarray:
    """Draw ``shape`` standard normals from stream ``key`` scaled by ``std``.

    ``std`` broadcasts against the trailing axis, so a per-coordinate noise
    vector can be passed directly.
    """
    z = derive(master, *key).standard_normal(shape)
    return z * np.asarray(std, dtype=float)
