"""Deterministic seed derivation.

All randomness in the package flows from a single base seed through
``derive_seed``, a SplitMix64 chain: each path component is folded into
the state by XOR with component * golden-ratio constant, then passed
through the SplitMix64 finalizer.  The finalizer is a bijection on
64-bit integers, so for a fixed path shape distinct components yield
distinct seeds.  This makes parallel and serial execution agree
bit-exactly: worker i at step k uses derive_seed(base, i, k) no matter
which thread runs it.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(x: int) -> int:
    x = (x + _GOLDEN) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def derive_seed(base_seed: int, *path: int) -> int:
    """Derive a 64-bit seed from a base seed and an index path."""
    state = base_seed & _MASK
    for component in path:
        state = _splitmix64(state ^ ((component * _GOLDEN) & _MASK))
    return _splitmix64(state)


def rng_from(base_seed: int, *path: int) -> np.random.Generator:
    """A PCG64 generator keyed by ``derive_seed(base_seed, *path)``."""
    return np.random.Generator(np.random.PCG64(derive_seed(base_seed, *path)))
