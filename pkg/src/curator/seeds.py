"""Labeled RNG derivation.

All randomness in the pipeline flows from a single 64-bit seed. Components
derive their own counter-based generators from (seed, label, ...) parts so
results never depend on iteration order or thread scheduling.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _to_word(part: int | str) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & _MASK64
    if isinstance(part, str):
        digest = hashlib.sha256(part.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError(f"seed parts must be int or str, got {type(part).__name__}")


def derive_rng(*parts: int | str) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by the given parts."""
    words = [_to_word(p) for p in parts]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))


def derive_seed(*parts: int | str) -> int:
    """Stable 64-bit sub-seed for handing to nested components."""
    words = [_to_word(p) for p in parts]
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0])
