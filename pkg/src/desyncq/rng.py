"""Deterministic named random substreams.

Every run owns one seed; each consumer (environment, exploration, replay
sampling, ...) draws from its own counter-based Philox stream keyed by
(seed, label). Adding or removing a consumer therefore never perturbs the
draws seen by the others, which is what makes bit-exact run comparisons
possible.
"""

from __future__ import annotations

import numpy as np

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def _fnv1a64(text: str) -> int:
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def substream(seed: int, label: str) -> np.random.Generator:
    """Generator for the named stream of a seeded run.

    Pure in (seed, label): two calls return generators that produce
    identical sequences.
    """
    key = np.array([seed & _MASK64, _fnv1a64(label)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(seed: int, label: str) -> int:
    """Stable integer sub-seed for components that take a seed of their own."""
    return (seed & _MASK64) ^ _fnv1a64(label)
