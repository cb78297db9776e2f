"""Deterministic trace generators for the five failure-mode patterns.

Every pattern is seeded and pure: identical params give bit-identical
traces.  Shapes are chosen so each pattern isolates one cache regime:

  agent_meta     shared header, per-request metadata blob, marker, shared
                 body.  Exact-prefix dies at the metadata; the body is
                 recoverable only content-addressed.
  sysvar         long shared prefix, a small per-request variable slot,
                 marker, shared tail.  Prefix captures most tokens.
  compact        one growing session, append-dominant, with a single
                 front-truncation compaction event mid-run.
  rerank         fixed prefix plus eight marker-wrapped documents whose
                 ordering persists across turns except for rare swaps deep
                 in the list.
  tool_variants  fixed prefix, one tool-schema block drawn from a small
                 pool, marker, shared tail.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .chunking import ChunkerParams, canonical_marker
from .engine import AggregateRow, EngineState, ServeConfig, run_trace
from .model import Request, Segment, Trace
from .rng import derive_seed

MARKER_LEN = 64

_POOL_LABEL = 0x504F4F4C
_REQ_LABEL = 0x524551


class Pattern(str, Enum):
    AGENT_META = "agent_meta"
    SYSVAR = "sysvar"
    COMPACT = "compact"
    RERANK = "rerank"
    TOOL_VARIANTS = "tool_variants"


@dataclass(frozen=True)
class PatternParams:
    pattern: Pattern = Pattern.AGENT_META
    n_req: int = 80
    body_len: int = 2500
    header_len: int = 50
    variant_pool: int = 8
    seed: int = 0
    markers: bool = True

    def __post_init__(self):
        if self.n_req < 2:
            raise ValueError("n_req must be at least 2")
        if self.header_len < 1:
            raise ValueError("header_len must be positive")
        if self.body_len < MARKER_LEN:
            raise ValueError("body_len must be at least the marker length")
        if self.variant_pool < 1:
            raise ValueError("variant_pool must be positive")


def _rng(seed: int, *labels: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *labels)))


def _tokens(rng: np.random.Generator, n: int) -> tuple[int, ...]:
    return tuple(int(t) for t in rng.integers(0, 2**32, size=n, dtype=np.uint64))


def _marker_segment(params: PatternParams) -> Segment:
    return Segment("marker", canonical_marker())


def _maybe_marker(params: PatternParams, segments: list[Segment]) -> list[Segment]:
    if params.markers:
        return segments
    return [s for s in segments if s.kind != "marker"]


def _gen_agent_meta(params: PatternParams) -> Trace:
    shared = _rng(params.seed, _POOL_LABEL, 0)
    header = _tokens(shared, params.header_len)
    body = _tokens(shared, params.body_len)
    requests = []
    for i in range(params.n_req):
        rng = _rng(params.seed, _REQ_LABEL, i)
        meta_len = int(rng.integers(30, 71))
        segments = [
            Segment("system", header, "agent_header"),
            Segment("header", _tokens(rng, meta_len)),
            _marker_segment(params),
            Segment("body", body, "agent_body"),
        ]
        requests.append(Request(f"s{i:03d}", 0, tuple(_maybe_marker(params, segments))))
    return Trace(tuple(requests))


def _gen_sysvar(params: PatternParams) -> Trace:
    shared = _rng(params.seed, _POOL_LABEL, 1)
    prefix = _tokens(shared, 1700 + params.header_len)
    tail = _tokens(shared, 750)
    variants = [_tokens(shared, 8) for _ in range(params.variant_pool)]
    requests = []
    for i in range(params.n_req):
        rng = _rng(params.seed, _REQ_LABEL, i)
        variant = variants[int(rng.integers(params.variant_pool))]
        # slot = pool variant plus a per-request nonce (timestamp-like churn)
        slot = variant + _tokens(rng, 32)
        segments = [
            Segment("system", prefix, "sysvar_prefix"),
            Segment("tool", slot),
            _marker_segment(params),
            Segment("body", tail, "sysvar_tail"),
        ]
        requests.append(Request(f"s{i:03d}", 0, tuple(_maybe_marker(params, segments))))
    return Trace(tuple(requests))


def _gen_compact(params: PatternParams) -> Trace:
    rng = _rng(params.seed, _POOL_LABEL, 2)
    append_len = max(params.body_len // 25, MARKER_LEN)
    content = list(_tokens(rng, params.body_len))
    compaction_turn = params.n_req // 2
    requests = []
    for i in range(params.n_req):
        if i > 0:
            if i == compaction_turn:
                # front-truncation compaction: drop the leading 10%
                content = content[len(content) // 10 :]
            content = content + list(_tokens(rng, append_len))
        requests.append(
            Request("compact", i, (Segment("history", tuple(content)),))
        )
    return Trace(tuple(requests))


def _gen_rerank(params: PatternParams) -> Trace:
    shared = _rng(params.seed, _POOL_LABEL, 3)
    prefix = _tokens(shared, 500)
    n_docs = 8
    docs = [_tokens(shared, 256) for _ in range(n_docs)]
    order = list(range(n_docs))
    requests = []
    for i in range(params.n_req):
        rng = _rng(params.seed, _REQ_LABEL, i)
        if i > 0 and rng.random() < 0.12:
            # rare reorder deep in the list: swap an adjacent pair
            j = int(rng.integers(n_docs - 3, n_docs - 1))
            order[j], order[j + 1] = order[j + 1], order[j]
        segments = [Segment("system", prefix, "rerank_prefix")]
        for j in order:
            segments.append(_marker_segment(params))
            segments.append(Segment("doc", docs[j], f"doc{j}"))
        requests.append(
            Request("rerank", i, tuple(_maybe_marker(params, segments)))
        )
    return Trace(tuple(requests))


def _gen_tool_variants(params: PatternParams) -> Trace:
    shared = _rng(params.seed, _POOL_LABEL, 4)
    prefix = _tokens(shared, 2000)
    tail = _tokens(shared, 500)
    schemas = [_tokens(shared, 100) for _ in range(params.variant_pool)]
    requests = []
    for i in range(params.n_req):
        rng = _rng(params.seed, _REQ_LABEL, i)
        schema = schemas[int(rng.integers(params.variant_pool))]
        segments = [
            Segment("system", prefix, "tool_prefix"),
            Segment("tool", schema),
            _marker_segment(params),
            Segment("body", tail, "tool_tail"),
        ]
        requests.append(Request(f"s{i:03d}", 0, tuple(_maybe_marker(params, segments))))
    return Trace(tuple(requests))


_GENERATORS = {
    Pattern.AGENT_META: _gen_agent_meta,
    Pattern.SYSVAR: _gen_sysvar,
    Pattern.COMPACT: _gen_compact,
    Pattern.RERANK: _gen_rerank,
    Pattern.TOOL_VARIANTS: _gen_tool_variants,
}


def generate(params: PatternParams) -> Trace:
    """Build the deterministic trace for one pattern."""
    return _GENERATORS[Pattern(params.pattern)](params)


@dataclass
class SweepRow:
    header_len: int
    tprefix: float
    pic_unique: float
    total: float


def header_sweep(
    base: PatternParams,
    header_lens: tuple[int, ...] = (50, 250, 1000, 2000),
    config: ServeConfig = None,
) -> list[SweepRow]:
    """One fresh engine run per header length, steady-state fractions.

    Rows report warm fractions (the cold first request excluded) so the
    sweep reflects the regime each header length settles into rather than
    cold-start dilution.
    """
    if Pattern(base.pattern) not in (Pattern.AGENT_META, Pattern.SYSVAR):
        raise ValueError("header sweep applies to agent_meta and sysvar only")
    if config is None:
        config = ServeConfig()
    rows = []
    for h in header_lens:
        params = replace(base, header_len=h)
        state = EngineState(config)
        _, agg = run_trace(state, generate(params), pattern=base.pattern.value)
        rows.append(SweepRow(h, agg.warm_tprefix, agg.warm_pic_unique, agg.warm_total))
    return rows
