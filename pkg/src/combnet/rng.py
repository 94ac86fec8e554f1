"""Deterministic RNG substreams.

All randomness in a run flows from one 64-bit root seed. Independent
substreams are derived from (root, *labels) where labels name the stage,
edge, detector, etc. Label hashing uses SHA-256, not Python's ``hash``,
so streams are stable across processes and interpreter versions.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _label_words(label) -> list[int]:
    if isinstance(label, (int, np.integer)):
        return [int(label) & 0xFFFFFFFF, (int(label) >> 32) & 0xFFFFFFFF]
    digest = hashlib.sha256(str(label).encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


def seed_sequence(root_seed: int, *labels) -> np.random.SeedSequence:
    entropy = [int(root_seed) & 0xFFFFFFFFFFFFFFFF]
    for label in labels:
        entropy.extend(_label_words(label))
    return np.random.SeedSequence(entropy)


def substream(root_seed: int, *labels) -> np.random.Generator:
    """Generator for the substream named by ``labels`` under ``root_seed``."""
    return np.random.default_rng(seed_sequence(root_seed, *labels))


def derive_seed(root_seed: int, *labels) -> int:
    """A 63-bit child seed for components that take an integer seed."""
    state = seed_sequence(root_seed, *labels).generate_state(2, np.uint64)
    return int(state[0] & np.uint64(0x7FFFFFFFFFFFFFFF))
