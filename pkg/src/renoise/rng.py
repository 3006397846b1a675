"""Deterministic named RNG streams.

Every stochastic component draws from its own child generator, derived from
one base seed plus a tuple of string/int labels. Independent streams keep
experiments reproducible regardless of evaluation order.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _label_words(labels) -> list[int]:
    words = []
    for lab in labels:
        if isinstance(lab, (int, np.integer)):
            words.append(int(lab) & 0xFFFFFFFF)
        else:
            digest = hashlib.sha256(str(lab).encode("utf-8")).digest()
            words.append(int.from_bytes(digest[:4], "big"))
    return words


def child_rng(base_seed: int, *labels) -> np.random.Generator:
    """Generator for the stream named by ``labels`` under ``base_seed``.

    The same (seed, labels) pair always yields an identical stream; distinct
    labels yield statistically independent streams.
    """
    seq = np.random.SeedSequence([int(base_seed) & 0xFFFFFFFF] + _label_words(labels))
    return np.random.Generator(np.random.PCG64(seq))


def derive_seed(base_seed: int, *labels) -> int:
    """Stable 32-bit child seed for components that take a seed, not a stream."""
    digest = hashlib.sha256()
    digest.update(str(int(base_seed)).encode())
    for w in _label_words(labels):
        digest.update(w.to_bytes(4, "big"))
    return int.from_bytes(digest.digest()[:4], "big")
