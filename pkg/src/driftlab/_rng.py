"""Deterministic counter-based randomness.

Every stream is a Philox-4x64 generator whose 128-bit key is derived from
(seed, tag) and whose 256-bit counter space is partitioned by trial index:
trial t owns the counter blocks with second word equal to t. Word w of
trial t is therefore a fixed function of (seed, tag, t, w) alone, so values
never depend on batch layout, execution order, thread schedule, or how much
of any other stream was consumed. Normals are produced one-word-per-value
through the inverse normal CDF, which keeps every Gaussian addressable by
its word index (the property that makes bridge refinement reproducible).
"""

from __future__ import annotations

import numpy as np
from numpy.random import Philox
from scipy.special import ndtri

__all__ = ["derive_key", "raw_words", "words_block", "normals_from_words"]

_MASK64 = (1 << 64) - 1


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def derive_key(seed: int, tag: str) -> np.ndarray:
    """128-bit Philox key for the (seed, tag) stream."""
    state = seed & _MASK64
    for byte in tag.encode():
        state, _ = _splitmix64(state ^ byte)
    state, k0 = _splitmix64(state)
    _, k1 = _splitmix64(state)
    return np.array([k0, k1], dtype=np.uint64)


def _counter(trial: int, block: int) -> np.ndarray:
    return np.array([block, trial, 0, 0], dtype=np.uint64)


def raw_words(key: np.ndarray, trial: int, n: int, skip: int = 0) -> np.ndarray:
    """Words [skip, skip+n) of the trial's substream."""
    block, within = divmod(skip, 4)
    bg = Philox(key=key, counter=_counter(trial, block))
    out = bg.random_raw(within + n)
    return out[within:] if within else out


def words_block(key: np.ndarray, trials: np.ndarray, n: int, skip: int = 0) -> np.ndarray:
    """Rows of words [skip, skip+n), one per trial; equals stacked raw_words."""
    block, within = divmod(skip, 4)
    out = np.empty((len(trials), n), dtype=np.uint64)
    bg = Philox(key=key)
    state = bg.state
    for i, trial in enumerate(trials):
        state["state"]["counter"][:] = (block, int(trial), 0, 0)
        state["buffer_pos"] = 4  # discard any buffered words from the old counter
        bg.state = state
        row = bg.random_raw(within + n)
        out[i] = row[within:] if within else row
    return out


def normals_from_words(words: np.ndarray) -> np.ndarray:
    """One standard normal per 64-bit word (inverse-CDF, never 0 or 1)."""
    u = ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)
