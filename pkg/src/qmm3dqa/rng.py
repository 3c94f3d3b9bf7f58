"""Seed derivation and counter-based random substreams.

Every random behavior in the pipeline is traceable to one 64-bit seed:

* ``derive_seed(seed, label)`` mixes a stage name into the seed with
  BLAKE2b, so one top-level integer reproduces an entire run.
* ``substream(seed, stream)`` returns a Philox generator keyed by
  ``(seed, stream)``.  Philox is counter-based, so substreams are
  independent by construction and stable across platforms.

Stream allocation used by the sampler: stream 0 drives the slot
permutation, stream ``k`` (1-based) drives view ``k``'s cell selection
and sub-window offsets.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(seed: int, label: str) -> int:
    """Derive a child 64-bit seed from ``seed`` and a stage label."""
    payload = f"{seed & _MASK64}:{label}".encode("utf-8")
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return int.from_bytes(digest, "little")


def substream(seed: int, stream: int) -> np.random.Generator:
    """Return the Philox substream ``stream`` of ``seed``."""
    key = np.array([seed & _MASK64, stream & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
