"""Deterministic seed derivation.

Every stochastic step in the pipeline draws its seed from the single
user-facing seed plus a label path, so results are independent of
evaluation order and of which stages run in the same process.
"""

import hashlib

import numpy as np


def derive_seed(*parts) -> int:
    """Hash (seed, label, indices...) into a stable 63-bit integer seed."""
    key = ":".join(str(p) for p in parts)
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def derive_rng(*parts) -> np.random.Generator:
    """A numpy Generator seeded by `derive_seed(*parts)`."""
    return np.random.default_rng(derive_seed(*parts))
