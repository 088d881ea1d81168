"""Deterministic RNG substreams.

All randomness in the package flows from a single 64-bit seed. Independent
streams are derived by hashing string/int tags into SeedSequence entropy, so
`substream(seed, "train", iteration, slot)` is reproducible across platforms
and independent of call order.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _tag_to_word(tag: object) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & 0xFFFFFFFF
    digest = hashlib.blake2b(str(tag).encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "little")


def substream(seed: int, *tags: object) -> np.random.Generator:
    """Return a Generator for the stream named by `tags` under `seed`."""
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_tag_to_word(t) for t in tags]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))


def stable_hash(*parts: object, bits: int = 64) -> int:
    """Deterministic cross-platform hash of the string forms of `parts`."""
    h = hashlib.blake2b(digest_size=bits // 8)
    for p in parts:
        h.update(str(p).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")
