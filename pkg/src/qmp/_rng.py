"""Deterministic stream derivation for parallel Monte Carlo.

Every random quantity in the package flows from a single 64-bit user seed.
Child seeds are derived with the splitmix64 finalizer, which is a bijection
on 64-bit words, so distinct stream indices can never collide for a fixed
seed.  Each child seed keys a counter-based Philox generator; the work done
for stream ``i`` is therefore independent of how many threads are running or
which thread picked it up.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> int:
    """One splitmix64 finalization step (Steele, Lea & Flood mixing)."""
    z = (state + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def child_seed(seed: int, index: int) -> int:
    """Derive the ``index``-th child of ``seed`` (the splitmix64 sequence)."""
    if index < 0:
        raise ValueError("stream index must be nonnegative")
    return splitmix64((seed + index * _GOLDEN) & _MASK64)


def stream(seed: int, index: int) -> np.random.Generator:
    """Counter-based generator for stream ``index`` of ``seed``."""
    return np.random.Generator(np.random.Philox(key=child_seed(seed, index)))
