"""Parser and serializer for the three device log grammars.

Edge entry:        ``E3>R3, <sent>, S:0``
Router entry:      ``E3>R3, <sent>, <received>, R3>R2, <sent>, S:0``
Coordinator entry: ``E3>R3, <sent>, <received>, ..., R2>C, <sent>, <received>``

Timestamps are ``YYYY-MM-DD HH:MM:SS.ffffff`` at microsecond precision.
Canonical serialization puts no spaces around ``>`` and a single space
after each comma; the parser additionally accepts single spaces around
``>`` and missing spaces after commas (the two renderings seen in the
field differ only in that whitespace).
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from datetime import datetime

from .nodes import EDGES, ROUTERS, A, C, NodeId

TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M:%S.%f"

_TIMESTAMP_RE = re.compile(r"^\d{4}-\d{2}-\d{2} \d{2}:\d{2}:\d{2}\.\d{6}$")
_PAIR_RE = re.compile(r"^([A-Z][0-9]*) ?> ?([A-Z][0-9]*)$")
_STATUS_RE = re.compile(r"^S:(\d+)$")

_KNOWN_TOKENS = {str(n) for n in (C, A) + ROUTERS + EDGES}


class ParseError(ValueError):
    """A malformed log entry; carries the byte offset of the bad field."""

    def __init__(self, reason: str, offset: int = 0):
        super().__init__(f"at byte {offset}: {reason}")
        self.reason = reason
        self.offset = offset


class IncompleteTrace(ValueError):
    """A delay was requested from an entry lacking the needed timestamps."""


class EntryKind(enum.Enum):
    EDGE = "edge"
    ROUTER = "router"
    COORDINATOR = "coordinator"


@dataclass(frozen=True)
class Segment:
    """One hop: the (from, to) pair, its send time and optional receive time."""

    src: NodeId
    dst: NodeId
    sent_at: datetime
    received_at: datetime | None = None


@dataclass(frozen=True)
class LogEntry:
    kind: EntryKind
    segments: tuple[Segment, ...]
    status: int | None = None

    @property
    def origin(self) -> NodeId:
        return self.segments[0].src

    @property
    def final_dest(self) -> NodeId:
        return self.segments[-1].dst


def format_timestamp(ts: datetime) -> str:
    return ts.strftime(TIMESTAMP_FORMAT)


def _parse_node(token: str, offset: int) -> NodeId:
    if token not in _KNOWN_TOKENS:
        raise ParseError(f"unknown node {token!r}", offset)
    return NodeId.parse(token)


def parse_entry(line: str) -> LogEntry:
    """Parse one logical log line into a structured entry.

    The entry kind is inferred from the segment structure: a lone
    send-only segment with status is an edge entry; a trailing send-only
    segment after complete ones is a router entry; all-complete segments
    form a coordinator entry (with an optional tolerated status).
    """
    fields: list[tuple[str, int]] = []
    offset = 0
    for raw in line.rstrip("\n").split(","):
        stripped = raw.strip()
        fields.append((stripped, offset + (len(raw) - len(raw.lstrip()))))
        offset += len(raw) + 1
    if fields and fields[-1][0] == "":
        fields.pop()
    if not fields:
        raise ParseError("empty entry", 0)

    status: int | None = None
    last_field, last_off = fields[-1]
    m = _STATUS_RE.match(last_field)
    if m:
        status = int(m.group(1))
        fields.pop()
        if not fields:
            raise ParseError("entry holds only a status", last_off)

    segments: list[Segment] = []
    pending: tuple[NodeId, NodeId] | None = None
    times: list[datetime] = []

    def flush(offset: int) -> None:
        nonlocal pending, times
        if pending is None:
            return
        if not times:
            raise ParseError("segment pair lacks a timestamp", offset)
        if len(times) > 2:
            raise ParseError("segment carries more than two timestamps", offset)
        received = times[1] if len(times) == 2 else None
        segments.append(Segment(pending[0], pending[1], times[0], received))
        pending, times = None, []

    for token, off in fields:
        pm = _PAIR_RE.match(token)
        if pm:
            flush(off)
            src = _parse_node(pm.group(1), off)
            dst = _parse_node(pm.group(2), off)
            pending = (src, dst)
        elif _TIMESTAMP_RE.match(token):
            if pending is None:
                raise ParseError("timestamp before any node pair", off)
            try:
                times.append(datetime.strptime(token, TIMESTAMP_FORMAT))
            except ValueError:
                raise ParseError(f"invalid timestamp {token!r}", off) from None
        else:
            raise ParseError(f"unrecognized field {token!r}", off)
    flush(len(line))

    if not segments:
        raise ParseError("entry has no segments", 0)
    for prev, cur in zip(segments, segments[1:]):
        if prev.dst != cur.src:
            raise ParseError(
                f"discontinuous path: {prev.dst} followed by {cur.src}", 0)

    complete = [s.received_at is not None for s in segments]
    if len(segments) == 1 and not complete[0]:
        if status is None:
            raise ParseError("edge entry missing status", 0)
        kind = EntryKind.EDGE
    elif all(complete):
        kind = EntryKind.COORDINATOR
    elif all(complete[:-1]) and not complete[-1]:
        if status is None:
            raise ParseError("router entry missing status", 0)
        kind = EntryKind.ROUTER
    else:
        raise ParseError("incomplete segment in the middle of an entry", 0)

    for seg in segments:
        if seg.received_at is not None and seg.received_at < seg.sent_at:
            raise ParseError(f"segment {seg.src}>{seg.dst} received before sent", 0)
    return LogEntry(kind, tuple(segments), status)


def serialize_entry(entry: LogEntry) -> str:
    """Render an entry in canonical form; inverse of :func:`parse_entry`."""
    fields: list[str] = []
    for seg in entry.segments:
        fields.append(f"{seg.src}>{seg.dst}")
        fields.append(format_timestamp(seg.sent_at))
        if seg.received_at is not None:
            fields.append(format_timestamp(seg.received_at))
    if entry.status is not None:
        fields.append(f"S:{entry.status}")
    return ", ".join(fields)


def _ms(start: datetime, end: datetime) -> float:
    return (end - start).total_seconds() * 1000.0


def end_to_end_delay(entry: LogEntry) -> float:
    """Milliseconds from first send to final receive; coordinator entries only."""
    if entry.kind is not EntryKind.COORDINATOR:
        raise IncompleteTrace("end-to-end delay requires a coordinator entry")
    last = entry.segments[-1]
    if last.received_at is None:
        raise IncompleteTrace("final segment lacks a receive timestamp")
    return _ms(entry.segments[0].sent_at, last.received_at)


def first_hop_delay(entry: LogEntry) -> float:
    """Milliseconds across the first segment; requires a complete first hop."""
    first = entry.segments[0]
    if first.received_at is None:
        raise IncompleteTrace("first segment lacks a receive timestamp")
    return _ms(first.sent_at, first.received_at)


def hop_count(entry: LogEntry) -> int:
    return len(entry.segments)


def parse_log(text: str) -> list[LogEntry]:
    """Parse a newline-delimited log document, skipping blank lines."""
    return [parse_entry(line) for line in text.splitlines() if line.strip()]
