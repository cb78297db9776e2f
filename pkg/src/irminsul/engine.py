"""The per-request serve path: prefix match, tail CDC, registry hit/miss.

Order of service for one request: exact-prefix match against all prior
requests, content-defined chunking of the unmatched tail (marker-pinned),
then per chunk either the first-chunk carve-out (absolute position < 32),
a registry hit served via delta-rotation, or a novel prefill plus registry
insert.  Observer and live mode produce identical accounting; live mode
additionally materializes every hit and verifies it against a fresh
synthetic prefill (the rotation tripwire).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .chunking import Chunk, ChunkerParams, cdc_chunk, marker_pin_offsets
from .fingerprint import fingerprint
from .model import Request, Trace, flatten, marker_spans
from .radix import RadixTree
from .registry import KvRegistry, SyntheticKvParams
from .rotary import Precision, RotarySpec, make_spec, rotate_rows

VERIFY_TOL = {Precision.F64: 1e-9, Precision.F32: 1e-6, Precision.BF16E: 5e-3}


class Mode(str, Enum):
    OBSERVER = "observer"
    LIVE = "live"


class ServiceClass(str, Enum):
    PREFIX_HIT = "prefix_hit"
    PIC_HIT = "pic_hit"
    S1_HIT = "s1_hit"
    CARVEOUT_PREFILL = "carveout_prefill"
    NOVEL_PREFILL = "novel_prefill"


@dataclass(frozen=True)
class ServeConfig:
    mode: Mode = Mode.OBSERVER
    carveout_threshold: int = 32
    s1_enabled: bool = False
    s1_window: int = 128
    chunker: ChunkerParams = ChunkerParams()
    spec: RotarySpec = None
    kv: SyntheticKvParams = SyntheticKvParams()
    precision: Precision = Precision.F64

    def __post_init__(self):
        if self.spec is None:
            object.__setattr__(self, "spec", make_spec(1e4, self.kv.kr_dim))


@dataclass(frozen=True)
class SegmentEvent:
    start: int  # absolute token offset in the request
    length: int
    klass: ServiceClass
    fingerprint: int | None = None
    delta: int | None = None


@dataclass
class ServeResult:
    counts: dict[ServiceClass, int]
    events: list[SegmentEvent]
    num_tokens: int
    live_rows: int | None = None  # rows assembled into the live KV output
    rotation_multiplies: int = 0

    @property
    def tprefix(self) -> float:
        return self.counts[ServiceClass.PREFIX_HIT] / self.num_tokens

    @property
    def pic_unique(self) -> float:
        return self.counts[ServiceClass.PIC_HIT] / self.num_tokens

    @property
    def s1_fraction(self) -> float:
        return self.counts[ServiceClass.S1_HIT] / self.num_tokens

    @property
    def total_cached(self) -> float:
        return self.tprefix + self.pic_unique + self.s1_fraction


class LiveVerificationError(AssertionError):
    """A materialized hit failed the materialize-vs-fresh check."""

    def __init__(self, start: int, length: int, delta: int, error: float):
        super().__init__(
            f"pic_hit at [{start}, {start + length}) with delta={delta} "
            f"failed rotation verification (rel-L2 {error:.3e})"
        )
        self.start = start
        self.delta = delta


class EngineState:
    """Mutable caches shared across the requests of one trace run."""

    def __init__(self, config: ServeConfig):
        self.config = config
        self.tree = RadixTree()
        self.registry = KvRegistry(config.kv, config.spec)
        self.subwindows: set[int] = set()  # s1 aligned sub-window fingerprints
        self.request_counter = 0


def s1_probe(
    chunk_tokens: Sequence[int],
    chunk_start: int,
    subwindows: set[int],
    window: int = 128,
) -> list[tuple[int, int]]:
    """Aligned sub-window probes for a missed chunk.

    Returns (absolute start, window length) for each sub-window whose
    fingerprint is indexed; only full windows are probed, residue stays
    novel.
    """
    hits = []
    for off in range(0, len(chunk_tokens) - window + 1, window):
        fp = fingerprint(chunk_tokens[off : off + window])
        if fp in subwindows:
            hits.append((chunk_start + off, window))
    return hits


def _index_subwindows(state: EngineState, chunk_tokens: Sequence[int]) -> None:
    window = state.config.s1_window
    for off in range(0, len(chunk_tokens) - window + 1, window):
        state.subwindows.add(fingerprint(chunk_tokens[off : off + window]))


def _verify_hit(
    state: EngineState, chunk_tokens: Sequence[int], entry, p: int
) -> tuple[int, int]:
    """Materialize a hit and check it against fresh synthetic prefill."""
    config = state.config
    mat = state.registry.materialize(entry, p, config.precision)
    c_fresh, kr_raw = state.registry.fresh_rows(chunk_tokens)
    if not np.array_equal(mat.c_kv, c_fresh):
        raise LiveVerificationError(p, len(chunk_tokens), mat.delta, float("inf"))
    fresh = rotate_rows(kr_raw, p + np.arange(len(chunk_tokens)), config.spec)
    err = float(np.linalg.norm(mat.k_r - fresh) / np.linalg.norm(fresh))
    if err > VERIFY_TOL[config.precision]:
        raise LiveVerificationError(p, len(chunk_tokens), mat.delta, err)
    return mat.k_r.shape[0], mat.multiplies


def serve(state: EngineState, request: Request) -> ServeResult:
    config = state.config
    flat, _ = flatten(request)
    n = len(flat)
    if n == 0:
        raise ValueError("request flattens to zero tokens")

    counts = {klass: 0 for klass in ServiceClass}
    events: list[SegmentEvent] = []
    live_rows = 0
    multiplies = 0

    m, _witness = state.tree.match_prefix(flat)
    if m > 0:
        counts[ServiceClass.PREFIX_HIT] = m
        events.append(SegmentEvent(0, m, ServiceClass.PREFIX_HIT))
        live_rows += m

    tail = flat[m:]
    pins = marker_pin_offsets(
        (max(s - m, 0), e - m) for s, e in marker_spans(request) if e - 1 >= m
    )
    carve = config.carveout_threshold
    for chunk in cdc_chunk(tail, config.chunker, pins):
        p = m + chunk.start
        chunk_tokens = tail[chunk.start : chunk.start + chunk.len]
        if p < carve:
            # sink-regime carve-out: tokens below the threshold prefill
            # unconditionally; the chunk is never probed against the registry
            carved = min(carve - p, chunk.len)
            counts[ServiceClass.CARVEOUT_PREFILL] += carved
            events.append(SegmentEvent(p, carved, ServiceClass.CARVEOUT_PREFILL))
            if chunk.len > carved:
                counts[ServiceClass.NOVEL_PREFILL] += chunk.len - carved
                events.append(
                    SegmentEvent(p + carved, chunk.len - carved, ServiceClass.NOVEL_PREFILL)
                )
            live_rows += chunk.len
            continue
        entry = state.registry.lookup(chunk.fingerprint)
        if entry is not None:
            counts[ServiceClass.PIC_HIT] += chunk.len
            events.append(
                SegmentEvent(
                    p, chunk.len, ServiceClass.PIC_HIT, chunk.fingerprint, p - entry.p_src
                )
            )
            if config.mode == Mode.LIVE:
                rows, mults = _verify_hit(state, chunk_tokens, entry, p)
                live_rows += rows
                multiplies += mults
            continue
        novel_spans = [(p, chunk.len)]
        if config.s1_enabled:
            hits = s1_probe(chunk_tokens, p, state.subwindows, config.s1_window)
            for start, length in hits:
                counts[ServiceClass.S1_HIT] += length
                events.append(
                    SegmentEvent(start, length, ServiceClass.S1_HIT,
                                 fingerprint(tail[start - m : start - m + length]))
                )
            novel_spans = _subtract_spans((p, chunk.len), hits)
        for start, length in novel_spans:
            counts[ServiceClass.NOVEL_PREFILL] += length
            events.append(SegmentEvent(start, length, ServiceClass.NOVEL_PREFILL))
        state.registry.insert(chunk.fingerprint, chunk_tokens, p)
        if config.s1_enabled:
            _index_subwindows(state, chunk_tokens)
        live_rows += chunk.len

    state.tree.insert(flat, state.request_counter)
    state.request_counter += 1

    assert sum(counts.values()) == n, "service classes must tile the request"
    return ServeResult(
        counts,
        events,
        n,
        live_rows=live_rows if config.mode == Mode.LIVE else None,
        rotation_multiplies=multiplies,
    )


def _subtract_spans(
    span: tuple[int, int], holes: list[tuple[int, int]]
) -> list[tuple[int, int]]:
    """Remove sorted disjoint hole spans from one covering span."""
    out = []
    pos, end = span[0], span[0] + span[1]
    for h_start, h_len in holes:
        if h_start > pos:
            out.append((pos, h_start - pos))
        pos = h_start + h_len
    if pos < end:
        out.append((pos, end - pos))
    return out


@dataclass
class AggregateRow:
    pattern: str
    model_tag: str
    n_req: int
    tprefix: float = 0.0
    pic_unique: float = 0.0
    s1_fraction: float = 0.0
    total: float = 0.0
    # steady-state fractions excluding the cold first request of the run
    warm_tprefix: float = 0.0
    warm_pic_unique: float = 0.0
    warm_s1_fraction: float = 0.0
    warm_total: float = 0.0
    rotation_multiplies: int = 0


def _fractions(results: list[ServeResult]) -> tuple[float, float, float, float]:
    tokens = sum(r.num_tokens for r in results)
    if tokens == 0:
        return 0.0, 0.0, 0.0, 0.0
    tp = sum(r.counts[ServiceClass.PREFIX_HIT] for r in results) / tokens
    pic = sum(r.counts[ServiceClass.PIC_HIT] for r in results) / tokens
    s1 = sum(r.counts[ServiceClass.S1_HIT] for r in results) / tokens
    return tp, pic, s1, tp + pic + s1


def run_trace(
    state: EngineState,
    trace: Trace,
    pattern: str = "trace",
    model_tag: str = "synthetic-oracle",
) -> tuple[list[ServeResult], AggregateRow]:
    """Serve a trace in order and aggregate token-weighted fractions.

    Aggregates are reported both over all requests and warm-start (the
    first request served on a cold engine excluded).
    """
    cold_start = state.request_counter == 0
    results = [serve(state, r) for r in trace.requests]
    row = AggregateRow(pattern, model_tag, len(results))
    row.tprefix, row.pic_unique, row.s1_fraction, row.total = _fractions(results)
    warm = results[1:] if cold_start and results else results
    (
        row.warm_tprefix,
        row.warm_pic_unique,
        row.warm_s1_fraction,
        row.warm_total,
    ) = _fractions(warm)
    row.rotation_multiplies = sum(r.rotation_multiplies for r in results)
    return results, row
