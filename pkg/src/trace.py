"""Execution trace: an append-only recorder plus the line-oriented trace file codec.

Line format: `<time_ns> <kind> <actor_kind>:<key> <field>=<value> ...`. Points print as
`x,y`, envelopes as `min_x,min_y,max_x,max_y`, itineraries as `x,y@t;x,y@t`, query hits as
`actor@x,y;...`, and `-` stands for an absent or empty value. Floats carry 6 decimals.
"""

from __future__ import annotations

from collections.abc import Callable, Iterable
from itertools import chain
from pathlib import Path
from typing import Any

from pydantic import BaseModel, TypeAdapter, ValidationError

from src.actor_kernel import ClockSource, current_shard
from src.errors import IncompleteTrace
from src.models import (
    ActorId,
    Envelope,
    Itinerary,
    Point,
    Predicate,
    QueryHit,
    TraceEvent,
    TraceEventKind,
    TracePayload,
)

_PAYLOAD_ADAPTER: TypeAdapter[Any] = TypeAdapter(TracePayload)


class Tracer:
    """Collects trace events in one append list per shard, merged on read."""

    def __init__(self, clock: ClockSource, num_shards: int = 1, enabled: bool = True):
        self.clock = clock
        self.enabled = enabled
        self._lanes: list[list[TraceEvent]] = [[] for _ in range(num_shards)]

    def record(
        self,
        actor: ActorId,
        payload: BaseModel,
        *,
        time: int | None = None,
        shard: int | None = None,
    ) -> TraceEvent | None:
        if not self.enabled:
            return None
        if shard is None:
            shard = current_shard() or 0
        event = TraceEvent(
            time=time if time is not None else self.clock.now(),
            actor=actor,
            payload=payload,  # type: ignore[arg-type]
        )
        self._lanes[shard % len(self._lanes)].append(event)
        return event

    def events(self) -> list[TraceEvent]:
        """All recorded events ordered by time."""
        return sorted(chain.from_iterable(self._lanes), key=lambda e: e.time)

    def count(self, kind: TraceEventKind) -> int:
        return sum(1 for lane in self._lanes for event in lane if event.kind is kind)

    def __len__(self) -> int:
        return sum(len(lane) for lane in self._lanes)


# Field codecs

def _fmt_float(v: float) -> str:
    return f"{v:.6f}"


def _fmt_point(p: Point) -> str:
    return f"{_fmt_float(p.x)},{_fmt_float(p.y)}"


def _parse_point(text: str) -> Point:
    x, y = text.split(",")
    return Point(x=float(x), y=float(y))


def _fmt_envelope(e: Envelope) -> str:
    return ",".join(_fmt_float(v) for v in e.as_bounds())


def _parse_envelope(text: str) -> Envelope:
    min_x, min_y, max_x, max_y = (float(v) for v in text.split(","))
    return Envelope.of(min_x, min_y, max_x, max_y)


def _fmt_itinerary(iti: Itinerary) -> str:
    return ";".join(f"{_fmt_point(p)}@{t}" for p, t in zip(iti.points, iti.timestamps))


def _parse_itinerary(text: str) -> Itinerary:
    points, stamps = [], []
    for item in text.split(";"):
        point, _, stamp = item.partition("@")
        points.append(_parse_point(point))
        stamps.append(int(stamp))
    return Itinerary(points=tuple(points), timestamps=tuple(stamps))


def _fmt_hits(hits: tuple[QueryHit, ...]) -> str:
    if not hits:
        return "-"
    return ";".join(f"{hit.actor}@{_fmt_point(hit.location)}" for hit in hits)


def _parse_hits(text: str) -> tuple[QueryHit, ...]:
    if text == "-":
        return ()
    hits = []
    for item in text.split(";"):
        actor, _, point = item.partition("@")
        hits.append(QueryHit(actor=ActorId.parse(actor), location=_parse_point(point)))
    return tuple(hits)


def _fmt_ints(values: tuple[int, ...]) -> str:
    return ",".join(str(v) for v in values) if values else "-"


def _parse_ints(text: str) -> tuple[int, ...]:
    return () if text == "-" else tuple(int(v) for v in text.split(","))


def _fmt_optional_int(v: int | None) -> str:
    return "-" if v is None else str(v)


def _parse_optional_int(text: str) -> int | None:
    return None if text == "-" else int(text)


_FIELD_CODECS: dict[str, tuple[Callable[[Any], str], Callable[[str], Any]]] = {
    "source": (_fmt_point, _parse_point),
    "dest": (_fmt_point, _parse_point),
    "location": (_fmt_point, _parse_point),
    "fence_offset": (_fmt_point, _parse_point),
    "window": (_fmt_envelope, _parse_envelope),
    "itinerary": (_fmt_itinerary, _parse_itinerary),
    "results": (_fmt_hits, _parse_hits),
    "cell_versions": (_fmt_ints, _parse_ints),
    "mover": (str, ActorId.parse),
    "predicate": (lambda p: p.value, Predicate),
    "fence_side": (_fmt_float, float),
    "t_req": (str, int),
    "t_start": (str, int),
    "query_id": (str, int),
    "retries": (str, int),
    "mover_t_u": (str, int),
    "skew_ns": (str, int),
    "epoch": (_fmt_optional_int, _parse_optional_int),
    "version": (_fmt_optional_int, _parse_optional_int),
}


def format_event(event: TraceEvent) -> str:
    """Render one event as a trace line (without the newline)."""
    tokens = [str(event.time), event.kind.value, str(event.actor)]
    for name in type(event.payload).model_fields:
        if name == "kind":
            continue
        encode, _ = _FIELD_CODECS[name]
        tokens.append(f"{name}={encode(getattr(event.payload, name))}")
    return " ".join(tokens)


def parse_event(line: str) -> TraceEvent:
    """Parse one trace line; raises ValueError (or a pydantic error) on malformed input."""
    parts = line.split()
    if len(parts) < 3:
        raise ValueError("expected at least time, kind and actor")
    time, kind, actor, *fields = parts
    data: dict[str, Any] = {"kind": TraceEventKind(kind)}
    for token in fields:
        name, sep, value = token.partition("=")
        if not sep or name not in _FIELD_CODECS:
            raise ValueError(f"unknown field {token!r}")
        data[name] = _FIELD_CODECS[name][1](value)
    return TraceEvent(time=int(time), actor=ActorId.parse(actor), payload=_PAYLOAD_ADAPTER.validate_python(data))


def write_trace(events: Iterable[TraceEvent], path: str | Path) -> Path:
    """Write events, one per line, sorted by time."""
    path = Path(path)
    ordered = sorted(events, key=lambda e: e.time)
    with path.open("w", encoding="utf-8") as f:
        for event in ordered:
            f.write(format_event(event))
            f.write("\n")
    return path


def read_trace(path: str | Path) -> list[TraceEvent]:
    """Read a trace file; blank lines and `#` comments are skipped."""
    events = []
    with Path(path).open(encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                events.append(parse_event(line))
            except (ValueError, KeyError, ValidationError) as e:
                raise IncompleteTrace(f"{path}:{line_no}: cannot parse trace line: {e}") from e
    return sorted(events, key=lambda e: e.time)
