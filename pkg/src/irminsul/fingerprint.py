"""64-bit content fingerprints over token-ID sequences.

Tokens are hashed as their little-endian 4-byte encodings, in order, with
xxHash64 seed 0. Hashing operates on token IDs, never on text.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import xxhash

XXH64_EMPTY = 0xEF46DB3751D8E999


def token_bytes(tokens: Sequence[int]) -> bytes:
    """Little-endian u32 encoding of a token sequence."""
    out = bytearray()
    for t in tokens:
        out += t.to_bytes(4, "little")
    return bytes(out)


def fingerprint_bytes(data: bytes) -> int:
    return xxhash.xxh64(data, seed=0).intdigest()


def fingerprint(tokens: Sequence[int]) -> int:
    """xxHash64 (seed 0) over the little-endian u32 encoding of the tokens."""
    return fingerprint_bytes(token_bytes(tokens))


def sliding_fingerprints(
    tokens: Sequence[int], window: int = 64
) -> list[tuple[int, int]]:
    """One (offset, hash) per window start offset 0 .. len-window.

    Empty when the input is shorter than the window.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    n = len(tokens)
    if n < window:
        return []
    data = token_bytes(tokens)
    w = 4 * window
    return [
        (off, fingerprint_bytes(data[4 * off : 4 * off + w]))
        for off in range(n - window + 1)
    ]
