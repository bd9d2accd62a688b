"""Small shared helpers: seeding, hashing, deterministic JSON."""

from __future__ import annotations

import hashlib
import json
import math


def round_half_up(x: float) -> int:
    """Round to the nearest integer, halves away from zero (for x >= 0)."""
    return int(math.floor(x + 0.5))


def derive_seed(*parts) -> int:
    """Derive a stable 32-bit seed from a tuple of hashable parts.

    Uses blake2b over the repr of the parts, so the result is identical
    across processes and platforms (unlike the builtin salted hash()).
    """
    text = "\x1f".join(repr(p) for p in parts)
    h = hashlib.blake2b(text.encode("utf-8"), digest_size=4)
    return int.from_bytes(h.digest(), "big")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def content_digest(obj) -> str:
    """Hex sha256 of the canonical JSON form of obj."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()
