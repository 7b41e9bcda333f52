"""Named sub-stream derivation for reproducible randomness.

Every command takes one integer seed; all internal randomness is drawn from
generators derived via ``derive_rng(seed, *names)``.  The derivation hashes
the (seed, names) tuple, so sub-streams are independent of each other and of
call order, and any component can be re-seeded in isolation.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, *names: object) -> int:
    """Map (seed, names...) to a stable 128-bit integer."""
    tag = repr((int(seed),) + tuple(names)).encode("utf-8")
    digest = hashlib.sha256(tag).digest()
    return int.from_bytes(digest[:16], "little")


def derive_rng(seed: int, *names: object) -> np.random.Generator:
    """Independent generator for the named sub-stream of ``seed``."""
    return np.random.default_rng(derive_seed(seed, *names))
