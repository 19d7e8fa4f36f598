"""Seed derivation for reproducible corpus generation.

Every generated copy owns an independent random stream derived from
``(master_seed, source_id, copy_index)`` via SHA-256::

    digest = SHA256(b"copydesc-augment-v1"
                    || u64le(master_seed)
                    || utf8(source_id) || 0x00
                    || u64le(copy_index))
    seed   = u128le(digest[:16])

The 128-bit seed feeds numpy's PCG64 generator.  Pinning both the hash
construction and the generator family makes corpora reproducible across
machines, worker counts, and scheduling orders: a copy's bytes depend only
on its own triple, never on which thread produced it.
"""

from __future__ import annotations

import hashlib

import numpy as np

from ..exceptions import ValidationError

_DOMAIN = b"copydesc-augment-v1"
_U64_MAX = 2**64 - 1


def derive_seed(master_seed: int, source_id: str, copy_index: int) -> int:
    """Return the 128-bit stream seed for one (source, copy) pair."""
    if not 0 <= master_seed <= _U64_MAX:
        raise ValidationError(f"master_seed must fit in u64, got {master_seed}")
    if copy_index < 0:
        raise ValidationError(f"copy_index must be >= 0, got {copy_index}")
    if not source_id:
        raise ValidationError("source_id must be non-empty")
    h = hashlib.sha256()
    h.update(_DOMAIN)
    h.update(master_seed.to_bytes(8, "little"))
    h.update(source_id.encode("utf-8"))
    h.update(b"\x00")
    h.update(copy_index.to_bytes(8, "little"))
    return int.from_bytes(h.digest()[:16], "little")


def copy_rng(master_seed: int, source_id: str, copy_index: int) -> np.random.Generator:
    """Generator for one copy; independent of every other copy's stream."""
    return np.random.Generator(np.random.PCG64(derive_seed(master_seed, source_id, copy_index)))
