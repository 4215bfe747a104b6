"""Named random substreams derived from one top-level seed."""

import zlib

import numpy as np


def _key_words(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFF
    return zlib.crc32(str(key).encode("utf-8"))


def substream(seed: int, *keys) -> np.random.Generator:
    """Return a generator keyed by ``(seed, *keys)``.

    Keys may be strings or integers. The same key path always yields the same
    stream, independent of the order in which other streams are drawn.
    """
    words = [int(seed) & 0xFFFFFFFF, (int(seed) >> 32) & 0xFFFFFFFF]
    words += [_key_words(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(words))


def subseed(seed: int, *keys) -> int:
    """Integer seed for a named substream (for configs that carry a seed)."""
    return int(substream(seed, *keys).integers(0, 2**31 - 1))
