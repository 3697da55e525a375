"""Folding a 2048-bit key into a short real vector for the gating network."""
from __future__ import annotations

import numpy as np

from ..crypto import KeyPhi
from ..errors import InvalidArgumentError


def key_embed(phi: KeyPhi, embed_dim: int = 128) -> np.ndarray:
    """Fraction of set bits in each stride group.

    Group j collects bits ``j, j + E, j + 2E, ...`` for ``E = embed_dim``, so an
    all-zero key maps to the zero vector.
    """
    if embed_dim < 1:
        raise InvalidArgumentError("embed_dim must be >= 1")
    bits = np.asarray(phi.bits, dtype=float)
    groups = np.arange(bits.size) % embed_dim
    counts = np.bincount(groups, weights=bits, minlength=embed_dim)
    sizes = np.bincount(groups, minlength=embed_dim)
    return counts / sizes
