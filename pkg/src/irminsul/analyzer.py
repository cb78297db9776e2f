"""Offline trace analysis: token decomposition and strategy comparison.

The decomposition splits each turn into prefix / pic_cacheable / novel
using 64-token sliding-window fingerprints; the strategy comparison replays
a trace under fixed-block, content-defined, and content-defined-plus-
fallback chunking and reports the recovered-token fraction of each.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .chunking import ChunkerParams, cdc_chunk, fixed_block_chunk, marker_pin_offsets
from .fingerprint import fingerprint, sliding_fingerprints
from .model import Request, Trace, flatten, marker_spans

DECOMP_WINDOW = 64
FALLBACK_WINDOW = 128


class Scope(str, Enum):
    WITHIN_SESSION = "within_session"
    CROSS_SESSION = "cross_session"


@dataclass
class TurnDecomposition:
    session_id: str
    turn_index: int
    num_tokens: int
    prefix: float
    pic_cacheable: float
    novel: float


@dataclass
class DecompositionReport:
    scope: Scope
    turns: list[TurnDecomposition]
    prefix: float = 0.0  # token-weighted aggregates
    pic_cacheable: float = 0.0
    novel: float = 0.0
    p50_pic: float = 0.0
    p95_pic: float = 0.0


def _lcp(a, b) -> int:
    limit = min(len(a), len(b))
    i = 0
    while i < limit and a[i] == b[i]:
        i += 1
    return i


def _window_coverage(tokens, start: int, seen: set[int], window: int) -> int:
    """Tokens in [start, len) covered by some previously seen window."""
    n = len(tokens)
    if n - start < 1:
        return 0
    covered = np.zeros(n - start, dtype=bool)
    for off, fp in sliding_fingerprints(tokens[start:], window):
        if fp in seen:
            covered[off : off + window] = True
    return int(covered.sum())


def decompose(trace: Trace, scope: Scope = Scope.CROSS_SESSION) -> DecompositionReport:
    """Per-turn prefix / pic_cacheable / novel split at 64-token windows.

    Prefix tokens are the longest common prefix with the session's previous
    turn (within_session) or the best over all earlier requests
    (cross_session).  Of the rest, a token is pic_cacheable when any
    64-token window containing it matched a window fingerprint seen earlier
    in scope, at any offset.
    """
    scope = Scope(scope)
    turns: list[TurnDecomposition] = []
    prev_turn: dict[str, tuple[int, ...]] = {}
    all_prior: list[tuple[int, ...]] = []
    seen_global: set[int] = set()
    seen_by_session: dict[str, set[int]] = {}

    token_totals = np.zeros(3)
    for request in trace.requests:
        tokens, _ = flatten(request)
        n = len(tokens)
        if scope == Scope.WITHIN_SESSION:
            prev = prev_turn.get(request.session_id)
            m = _lcp(tokens, prev) if prev is not None else 0
            seen = seen_by_session.setdefault(request.session_id, set())
        else:
            m = max((_lcp(tokens, p) for p in all_prior), default=0)
            seen = seen_global
        pic = _window_coverage(tokens, m, seen, DECOMP_WINDOW)
        novel = n - m - pic
        turns.append(
            TurnDecomposition(
                request.session_id,
                request.turn_index,
                n,
                m / n if n else 0.0,
                pic / n if n else 0.0,
                novel / n if n else 0.0,
            )
        )
        token_totals += (m, pic, novel)
        seen.update(fp for _, fp in sliding_fingerprints(tokens, DECOMP_WINDOW))
        prev_turn[request.session_id] = tokens
        all_prior.append(tokens)

    report = DecompositionReport(scope, turns)
    total = token_totals.sum()
    if total > 0:
        report.prefix, report.pic_cacheable, report.novel = token_totals / total
    if turns:
        pics = [t.pic_cacheable for t in turns]
        report.p50_pic = float(np.percentile(pics, 50))
        report.p95_pic = float(np.percentile(pics, 95))
    return report


@dataclass
class StrategyReport:
    fixed_block: float
    cdc: float
    cdc_fallback: float
    ratio: float  # cdc_fallback / fixed_block

    def __post_init__(self):
        assert self.cdc_fallback >= self.cdc >= 0.0


def _request_pins(request: Request, params: ChunkerParams) -> set[int]:
    if not params.marker_pinned:
        return set()
    return marker_pin_offsets(marker_spans(request))


def compare_strategies(
    trace: Trace,
    params: ChunkerParams = ChunkerParams(),
    block: int = FALLBACK_WINDOW,
    content_key_only: bool = False,
) -> StrategyReport:
    """Recovered-token fraction under three dedup strategies.

    fixed_block keys matches on (hash, offset) so it only hits when the
    same content recurs at the same absolute block position
    (content_key_only drops the offset from the key, for ablation).  cdc
    keys on chunk content hashes.  cdc_fallback additionally probes
    aligned 128-token sub-windows of each missed chunk against a sliding
    window index over all earlier content.
    """
    fixed_seen: set = set()
    cdc_seen: set[int] = set()
    window_seen: set[int] = set()
    recovered = np.zeros(3)
    total = 0

    for request in trace.requests:
        tokens, _ = flatten(request)
        total += len(tokens)
        pins = _request_pins(request, params)

        blocks = fixed_block_chunk(tokens, block)
        keys = [
            c.fingerprint if content_key_only else (c.fingerprint, c.start)
            for c in blocks
        ]
        recovered[0] += sum(
            c.len for c, key in zip(blocks, keys) if key in fixed_seen
        )
        fixed_seen.update(keys)

        chunks = cdc_chunk(tokens, params, pins)
        for chunk in chunks:
            if chunk.fingerprint in cdc_seen:
                recovered[1] += chunk.len
                recovered[2] += chunk.len
                continue
            for off in range(0, chunk.len - FALLBACK_WINDOW + 1, FALLBACK_WINDOW):
                span = tokens[chunk.start + off : chunk.start + off + FALLBACK_WINDOW]
                if fingerprint(span) in window_seen:
                    recovered[2] += FALLBACK_WINDOW
        cdc_seen.update(c.fingerprint for c in chunks)
        window_seen.update(
            fp for _, fp in sliding_fingerprints(tokens, FALLBACK_WINDOW)
        )

    if total == 0:
        return StrategyReport(0.0, 0.0, 0.0, 0.0)
    fixed, cdc, fallback = recovered / total
    ratio = fallback / fixed if fixed > 0 else float("inf")
    return StrategyReport(float(fixed), float(cdc), float(fallback), float(ratio))


def mask_sweep(
    trace: Trace,
    k_values: tuple[int, ...] = (7, 16),
    params: ChunkerParams = ChunkerParams(),
) -> dict[int, float]:
    """CDC recovery per mask exponent at identical max_size."""
    out = {}
    for k in k_values:
        if not (1 <= k <= 20):
            raise ValueError(f"mask exponent {k} outside [1, 20]")
        kp = ChunkerParams(
            mask_exponent=k,
            min_size=min(params.min_size, 2**k),
            max_size=params.max_size,
            gear_seed=params.gear_seed,
            marker_pinned=params.marker_pinned,
        )
        out[k] = compare_strategies(trace, kp).cdc
    return out
