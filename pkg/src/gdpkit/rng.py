"""Deterministic random-stream derivation.

Every stochastic operation in the toolkit draws from a generator derived
from an integer master seed plus a tuple of purpose tags (strings or ints).
Tags are folded into the seed material through SHA-256, so distinct purposes
(or distinct matrix shapes) never share a stream, and the derivation does not
depend on Python's per-process hash randomization.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _tag_word(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        data = b"int:" + int(tag).to_bytes(16, "little", signed=True)
    elif isinstance(tag, str):
        data = b"str:" + tag.encode("utf-8")
    else:
        raise TypeError(f"stream tags must be int or str, got {type(tag).__name__}")
    return int.from_bytes(hashlib.sha256(data).digest()[:8], "little")


def derive_rng(seed: int, *tags) -> np.random.Generator:
    """Return a Generator keyed by (seed, tags); stable across processes."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_tag_word(t) for t in tags]
    key = np.random.SeedSequence(entropy).generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
