"""Token/request/trace data model and the JSONL trace format.

Token IDs are opaque unsigned 32-bit integers; no tokenizer is involved.
A trace file is UTF-8 line-delimited JSON, one request per line:

    {"session_id": str, "turn": int, "segments":
        [{"kind": str, "tokens": [int...], "shared_id": str|null}]}

Field order is canonical as listed and unknown fields are rejected, so
serialization round-trips byte-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO, Iterable

from .chunking import MARKER_LEN

TOKEN_MAX = 2**32 - 1

SEGMENT_KINDS = frozenset(
    {"system", "header", "history", "tool", "doc", "marker", "body", "other"}
)


class TraceFormatError(ValueError):
    """Malformed trace input; carries the offending line number and field."""

    def __init__(self, line_no: int, fld: str, message: str):
        super().__init__(f"line {line_no}, field {fld!r}: {message}")
        self.line_no = line_no
        self.field = fld


@dataclass(frozen=True)
class Segment:
    kind: str
    tokens: tuple[int, ...]
    shared_id: str | None = None

    def __post_init__(self):
        if self.kind not in SEGMENT_KINDS:
            raise ValueError(f"unknown segment kind {self.kind!r}")
        if self.kind == "marker" and len(self.tokens) != MARKER_LEN:
            raise ValueError(f"marker segment must hold exactly {MARKER_LEN} tokens")


@dataclass(frozen=True)
class Request:
    session_id: str
    turn_index: int
    segments: tuple[Segment, ...]

    def __post_init__(self):
        if self.turn_index < 0:
            raise ValueError("turn_index must be non-negative")

    @property
    def num_tokens(self) -> int:
        return sum(len(s.tokens) for s in self.segments)


@dataclass(frozen=True)
class Trace:
    requests: tuple[Request, ...] = ()

    def __post_init__(self):
        last_turn: dict[str, int] = {}
        for r in self.requests:
            prev = last_turn.get(r.session_id)
            if prev is not None and r.turn_index <= prev:
                raise ValueError(
                    f"turn_index not strictly increasing in session {r.session_id!r}"
                )
            last_turn[r.session_id] = r.turn_index


def flatten(request: Request) -> tuple[tuple[int, ...], list[int]]:
    """Concatenated tokens plus the absolute start offset of each segment."""
    offsets = []
    tokens: list[int] = []
    for seg in request.segments:
        offsets.append(len(tokens))
        tokens.extend(seg.tokens)
    return tuple(tokens), offsets


def marker_spans(request: Request) -> list[tuple[int, int]]:
    """(start, end) absolute spans of the request's marker segments."""
    spans = []
    pos = 0
    for seg in request.segments:
        if seg.kind == "marker":
            spans.append((pos, pos + len(seg.tokens)))
        pos += len(seg.tokens)
    return spans


def _check_tokens(raw, line_no: int) -> tuple[int, ...]:
    if not isinstance(raw, list):
        raise TraceFormatError(line_no, "tokens", "expected a list")
    for t in raw:
        if not isinstance(t, int) or isinstance(t, bool):
            raise TraceFormatError(line_no, "tokens", f"non-integer token {t!r}")
        if not (0 <= t <= TOKEN_MAX):
            raise TraceFormatError(
                line_no, "tokens", f"token {t} outside unsigned 32-bit range"
            )
    return tuple(raw)


def _parse_request(line: str, line_no: int) -> Request:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise TraceFormatError(line_no, "<line>", f"invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise TraceFormatError(line_no, "<line>", "expected a JSON object")
    extra = set(obj) - {"session_id", "turn", "segments"}
    if extra:
        raise TraceFormatError(line_no, sorted(extra)[0], "unknown field")
    try:
        session_id = obj["session_id"]
        turn = obj["turn"]
        raw_segments = obj["segments"]
    except KeyError as exc:
        raise TraceFormatError(line_no, exc.args[0], "missing field") from exc
    if not isinstance(session_id, str):
        raise TraceFormatError(line_no, "session_id", "expected a string")
    if not isinstance(turn, int) or isinstance(turn, bool) or turn < 0:
        raise TraceFormatError(line_no, "turn", "expected a non-negative integer")
    if not isinstance(raw_segments, list):
        raise TraceFormatError(line_no, "segments", "expected a list")
    segments = []
    for raw_seg in raw_segments:
        if not isinstance(raw_seg, dict):
            raise TraceFormatError(line_no, "segments", "segment must be an object")
        extra = set(raw_seg) - {"kind", "tokens", "shared_id"}
        if extra:
            raise TraceFormatError(line_no, sorted(extra)[0], "unknown field")
        kind = raw_seg.get("kind")
        if kind not in SEGMENT_KINDS:
            raise TraceFormatError(line_no, "kind", f"unknown segment kind {kind!r}")
        tokens = _check_tokens(raw_seg.get("tokens"), line_no)
        shared_id = raw_seg.get("shared_id")
        if shared_id is not None and not isinstance(shared_id, str):
            raise TraceFormatError(line_no, "shared_id", "expected string or null")
        try:
            segments.append(Segment(kind, tokens, shared_id))
        except ValueError as exc:
            raise TraceFormatError(line_no, "tokens", str(exc)) from exc
    return Request(session_id, turn, tuple(segments))


def parse_trace(source: Iterable[str] | IO[str]) -> Trace:
    """Parse line-delimited request records, preserving input order."""
    requests = []
    for line_no, line in enumerate(source, start=1):
        if not line.strip():
            continue
        requests.append(_parse_request(line, line_no))
    return Trace(tuple(requests))


def serialize_request(request: Request) -> str:
    obj = {
        "session_id": request.session_id,
        "turn": request.turn_index,
        "segments": [
            {"kind": s.kind, "tokens": list(s.tokens), "shared_id": s.shared_id}
            for s in request.segments
        ],
    }
    return json.dumps(obj, separators=(", ", ": "))


def serialize_trace(trace: Trace) -> str:
    """Canonical textual form; one request per line, trailing newline."""
    return "".join(serialize_request(r) + "\n" for r in trace.requests)
