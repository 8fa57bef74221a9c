"""Deterministic derivation of independent random streams.

Every random draw in the package comes from a stream keyed by
``(master seed, purpose tag, index...)`` through ``numpy.random.SeedSequence``
spawn keys. Streams with different keys are statistically independent, and
changing one index (say, adding a feature dimension) never reshuffles the
noise consumed by the others. Exact bit patterns are implementation-defined;
determinism means a stream reproduces itself bit for bit for equal keys.
"""

from __future__ import annotations

import numpy as np

# Purpose tags. Appending new tags is safe; renumbering existing ones changes
# every stream derived from a stored seed.
SINE_NOISE = 1
CONV_NOISE = 2
GATE_NOISE = 3
FEATURE_PROJECTION = 4
FIT_INIT = 5
PROBE_CONTENT = 6
HARNESS_PARAMS = 7
HARNESS_TRIAL = 8
HARNESS_CONTENT = 9

_U64 = 2**64


def check_seed(seed: int) -> int:
    """Validate a 64-bit unsigned master seed and return it as ``int``."""
    seed = int(seed)
    if not 0 <= seed < _U64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def stream(seed: int, *key: int) -> np.random.Generator:
    """Generator for the ``(seed, *key)`` slot; equal arguments, equal bits."""
    seq = np.random.SeedSequence(check_seed(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(seq)


def derive_seed(seed: int, *key: int) -> int:
    """A fresh 64-bit master seed for the ``(seed, *key)`` slot."""
    return int(stream(seed, *key).integers(_U64, dtype=np.uint64))
