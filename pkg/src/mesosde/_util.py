"""Shared plumbing: RNG handling and float formatting for file outputs."""

from __future__ import annotations

import numpy as np

# %.17g round-trips binary64 exactly; %.12g is used for bulk data files
# where nine-plus significant digits suffice.
EXACT_FMT = "%.17g"
DATA_FMT = "%.12g"


def as_generator(seed) -> np.random.Generator:
    """Coerce ``seed`` (int, SeedSequence, Generator, or None) to a Generator."""
    return np.random.default_rng(seed)


def derive_seed(seed: int, stream: int) -> int:
    """Derive an independent child seed for a numbered random stream.

    All randomness of a pipeline flows from one root seed; each stage draws
    from its own child stream so stages compose reproducibly.
    """
    ss = np.random.SeedSequence(seed, spawn_key=(stream,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
