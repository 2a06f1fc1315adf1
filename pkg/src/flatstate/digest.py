"""Single digest seam for the whole database.

Every hash in the system (page hashes, tree nodes, commitments, block
hashes, bucket placement) goes through ``digest`` so the function can be
swapped in one place and so tests can count invocations when asserting
lazy-hashing work bounds.
"""

from __future__ import annotations

import hashlib

HASH_SIZE = 32

_calls = 0


def digest(data: bytes) -> bytes:
    """SHA-256 of ``data``; increments the global invocation counter."""
    global _calls
    _calls += 1
    return hashlib.sha256(data).digest()


def digest_count() -> int:
    """Total digest invocations so far. Tests compare deltas, never absolutes."""
    return _calls


def add_calls(n: int) -> None:
    """Account for ``n`` digests computed outside the wrapper (hot loops)."""
    global _calls
    _calls += n


# Hash of the empty byte string: the root of an empty tree and the value of
# padding leaves in partially filled trees.
EMPTY_HASH = digest(b"")

ZERO_HASH = b"\x00" * HASH_SIZE
