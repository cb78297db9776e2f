"""Content-defined chunking with a Gear rolling hash, plus fixed-block tiling.

Boundary rule: after at least ``min_size`` tokens, a boundary is emitted when
the low ``k`` bits of the rolling state are zero; ``max_size`` forces a
boundary unconditionally, and marker pins force one at the supplied offsets.

The rolling state is ``h <- rotl64(h, 1) + table[token mod 65536]`` and is
reset to zero only at the start of a stream and at marker-forced boundaries.
A reset makes everything downstream a pure function of downstream content,
which is what gives marker pinning its exact (not probabilistic) guarantee:
identical content behind a marker chunks identically at any absolute
position.  Between markers the state keeps full history, so streams that
diverge anywhere chunk differently everywhere after the divergence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .fingerprint import fingerprint
from .rng import MASK64, SplitMix64

DEFAULT_GEAR_SEED = 0x49524D494E53554C
GEAR_TABLE_SIZE = 65536
MARKER_LEN = 64


class Forced(str, Enum):
    NONE = "none"
    MAX_CLAMP = "max_clamp"
    MARKER = "marker"
    STREAM_END = "stream_end"


@dataclass(frozen=True)
class ChunkerParams:
    mask_exponent: int = 7
    min_size: int = 32
    max_size: int = 512
    gear_seed: int = DEFAULT_GEAR_SEED
    marker_pinned: bool = True

    def __post_init__(self):
        if not (1 <= self.mask_exponent <= 20):
            raise ValueError("mask_exponent must be in [1, 20]")
        if not (1 <= self.min_size < self.max_size):
            raise ValueError("need 1 <= min_size < max_size")


@dataclass(frozen=True)
class Chunk:
    start: int
    len: int
    fingerprint: int
    forced: Forced = Forced.NONE

    @property
    def end(self) -> int:
        return self.start + self.len


def build_gear_table(seed: int) -> list[int]:
    """65,536 64-bit entries: the splitmix64 output stream for ``seed``."""
    return SplitMix64(seed).fill(GEAR_TABLE_SIZE)


_TABLE_CACHE: dict[int, list[int]] = {}


def gear_table(seed: int = DEFAULT_GEAR_SEED) -> list[int]:
    table = _TABLE_CACHE.get(seed)
    if table is None:
        table = _TABLE_CACHE[seed] = build_gear_table(seed)
    return table


def canonical_marker(seed: int = DEFAULT_GEAR_SEED) -> tuple[int, ...]:
    """The fixed 64-token boundary marker derived from the gear seed.

    A dedicated splitmix64 stream (re-seeded through one extra step so it is
    disjoint from the gear table stream) supplies the token values.
    """
    gen = SplitMix64(SplitMix64(seed ^ MARKER_LEN).next_u64())
    return tuple(v & 0xFFFFFFFF for v in gen.fill(MARKER_LEN))


def cdc_chunk(
    tokens: Sequence[int],
    params: ChunkerParams,
    marker_positions: Iterable[int] = (),
) -> list[Chunk]:
    """Chunk ``tokens`` with the Gear boundary rule.

    ``marker_positions`` holds offsets t such that a boundary is forced after
    token t (with a rolling-state reset).  The engine supplies the final
    token of each marker plus the token just before the marker, so a marker
    always forms a chunk of its own.
    """
    n = len(tokens)
    if n == 0:
        return []
    markers = frozenset(marker_positions) if params.marker_pinned else frozenset()
    table = gear_table(params.gear_seed)
    mask = (1 << params.mask_exponent) - 1
    min_size = params.min_size
    max_size = params.max_size

    chunks: list[Chunk] = []
    h = 0
    start = 0
    for t in range(n):
        h = (((h << 1) | (h >> 63)) + table[tokens[t] & 0xFFFF]) & MASK64
        since = t - start + 1
        if t in markers:
            forced = Forced.MARKER
            h = 0
        elif since == max_size:
            forced = Forced.MAX_CLAMP
        elif since >= min_size and (h & mask) == 0:
            forced = Forced.NONE
        else:
            continue
        chunks.append(
            Chunk(start, since, fingerprint(tokens[start : t + 1]), forced)
        )
        start = t + 1
    if start < n:
        chunks.append(
            Chunk(start, n - start, fingerprint(tokens[start:n]), Forced.STREAM_END)
        )
    return chunks


def fixed_block_chunk(tokens: Sequence[int], block: int) -> list[Chunk]:
    """Aligned fixed-size tiling at offsets 0, B, 2B, ..."""
    if block < 1:
        raise ValueError("block must be >= 1")
    n = len(tokens)
    chunks = []
    for start in range(0, n, block):
        end = min(start + block, n)
        forced = Forced.STREAM_END if end - start < block else Forced.NONE
        chunks.append(Chunk(start, end - start, fingerprint(tokens[start:end]), forced))
    return chunks


def marker_pin_offsets(marker_spans: Iterable[tuple[int, int]]) -> set[int]:
    """Forced-boundary offsets for marker spans given as (start, end).

    Pins both edges: a boundary after the token preceding the marker (when it
    exists) and after the marker's final token, so the marker is always a
    standalone chunk and the region behind it starts from a flushed state.
    """
    pins: set[int] = set()
    for start, end in marker_spans:
        if start > 0:
            pins.add(start - 1)
        pins.add(end - 1)
    return pins
