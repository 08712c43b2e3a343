"""Offline checks of a recorded execution against the Freshness and Snapshot semantics.

Every check walks a time-sorted trace and yields one Verdict per decision it makes: one per
query, one per fired reaction, one per (sensor, mover hop) pair that a reaction could have
been owed for, one per flushed epoch itinerary. Ambiguous verdicts mark executions the
semantics allows either way; they count as passing but are tallied separately.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from collections import Counter, defaultdict
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field

from apify import Actor

from src.errors import IncompleteTrace
from src.geometry import convex_hull, envelope_contains, eval_itinerary, eval_predicate, fence_at
from src.grid import cell_of
from src.models import (
    ActorId,
    ConvexPolygon,
    Envelope,
    FlushSentPayload,
    GridConfig,
    Itinerary,
    MoveDonePayload,
    Point,
    Predicate,
    QueryEndPayload,
    QueryStartPayload,
    ReactionFiredPayload,
    Segment,
    Semantics,
    SpawnedPayload,
    TraceEvent,
    TraceEventKind,
    Verdict,
    VerdictStatus,
    VerificationSummary,
)

PASS = Verdict(status=VerdictStatus.PASS)
AMBIGUOUS = Verdict(status=VerdictStatus.AMBIGUOUS)

_MAX_WITNESSES = 5


def fail(witness: str) -> Verdict:
    return Verdict(status=VerdictStatus.FAIL, witness=witness)


def combine(verdicts: Sequence[Verdict]) -> Verdict:
    """Fail if any verdict failed, else Ambiguous if any was ambiguous, else Pass."""
    failures = [v.witness or "" for v in verdicts if v.failed]
    if failures:
        more = f" (+{len(failures) - _MAX_WITNESSES} more)" if len(failures) > _MAX_WITNESSES else ""
        return fail("; ".join(failures[:_MAX_WITNESSES]) + more)
    if any(v.status is VerdictStatus.AMBIGUOUS for v in verdicts):
        return AMBIGUOUS
    return PASS


# Trace index

@dataclass
class ActorHistory:
    """Everything the trace says about one moving actor, in time order."""

    spawn_time: int | None = None
    spawn: SpawnedPayload | None = None
    move_times: list[int] = field(default_factory=list)
    moves: list[MoveDonePayload] = field(default_factory=list)
    sensing_times: list[int] = field(default_factory=list)
    sensing: list[Predicate | None] = field(default_factory=list)  # None marks SensingOff
    flush_epochs: list[int] = field(default_factory=list)
    flushes: dict[int, tuple[int, FlushSentPayload]] = field(default_factory=dict)

    def location_before(self, t: int, *, inclusive: bool = False) -> Point | None:
        """Location after every move completed before `t` (at `t` too when inclusive)."""
        idx = (bisect_right if inclusive else bisect_left)(self.move_times, t)
        if idx:
            return self.moves[idx - 1].dest
        if self.spawn is None or self.spawn_time is None or self.spawn_time > t:
            return None
        return self.spawn.location

    def fence(self, pt: Point) -> ConvexPolygon:
        assert self.spawn is not None
        return fence_at(pt, self.spawn.fence_side, self.spawn.fence_offset)

    def predicate_at(self, t: int) -> Predicate | None:
        idx = bisect_right(self.sensing_times, t)
        return self.sensing[idx - 1] if idx else None

    def sensing_changes_after(self, t: int) -> bool:
        return bisect_right(self.sensing_times, t) < len(self.sensing_times)

    def sensing_since(self, t: int) -> int | None:
        """Start of the uninterrupted sensing interval that covers `t`."""
        idx = bisect_right(self.sensing_times, t)
        if not idx or self.sensing[idx - 1] is None:
            return None
        start = idx - 1
        while start > 0 and self.sensing[start - 1] is not None:
            start -= 1
        return self.sensing_times[start]

    def move_at(self, t_u: int) -> MoveDonePayload | None:
        idx = bisect_left(self.move_times, t_u)
        if idx < len(self.move_times) and self.move_times[idx] == t_u:
            return self.moves[idx]
        return None

    def moving_during(self, lo: int, hi: int) -> bool:
        """Whether some move's turn [t_start, t_u] overlaps [lo, hi]."""
        idx = bisect_left(self.move_times, lo)
        return idx < len(self.moves) and self.moves[idx].t_start <= hi


class TraceIndex:
    """Per-actor histories and lookup tables built once from a sorted trace."""

    def __init__(self, events: Sequence[TraceEvent]):
        self.events = sorted(events, key=lambda e: e.time)
        self.histories: defaultdict[ActorId, ActorHistory] = defaultdict(ActorHistory)
        self.query_starts: dict[int, TraceEvent] = {}
        self.query_ends: dict[int, TraceEvent] = {}
        self.reactions: list[TraceEvent] = []
        self.relays: defaultdict[tuple[ActorId, int | None, int], list[int]] = defaultdict(list)
        self.applied: dict[int, int] = {}

        for event in self.events:
            p = event.payload
            if p.kind is TraceEventKind.SPAWNED:
                h = self.histories[event.actor]
                h.spawn_time, h.spawn = event.time, p
            elif p.kind is TraceEventKind.MOVE_DONE:
                h = self.histories[event.actor]
                h.move_times.append(event.time)
                h.moves.append(p)
            elif p.kind is TraceEventKind.SENSING_ON:
                h = self.histories[event.actor]
                h.sensing_times.append(event.time)
                h.sensing.append(p.predicate)
            elif p.kind is TraceEventKind.SENSING_OFF:
                h = self.histories[event.actor]
                h.sensing_times.append(event.time)
                h.sensing.append(None)
            elif p.kind is TraceEventKind.FLUSH_SENT:
                h = self.histories[event.actor]
                h.flush_epochs.append(p.epoch)
                h.flushes[p.epoch] = (event.time, p)
            elif p.kind is TraceEventKind.QUERY_START:
                self.query_starts[p.query_id] = event
            elif p.kind is TraceEventKind.QUERY_END:
                self.query_ends[p.query_id] = event
            elif p.kind is TraceEventKind.REACTION_FIRED:
                self.reactions.append(event)
            elif p.kind is TraceEventKind.RELAYED:
                key = (p.mover, p.epoch, p.mover_t_u if p.epoch is None else 0)
                self.relays[key].append(event.time)
            elif p.kind is TraceEventKind.SNAPSHOT_APPLIED:
                self.applied.setdefault(p.epoch, event.time)

        self._applied_order = sorted(self.applied.items(), key=lambda item: item[1])

    def history(self, actor: ActorId) -> ActorHistory | None:
        return self.histories.get(actor)

    def sensors(self) -> list[ActorId]:
        reacting = {e.actor for e in self.reactions}
        return sorted(
            (a for a, h in self.histories.items() if h.sensing_times or a in reacting),
            key=lambda a: a.key,
        )

    def relay_times(self, mover: ActorId, *, t_u: int | None = None, epoch: int | None = None) -> list[int]:
        key = (mover, epoch, t_u if epoch is None and t_u is not None else 0)
        return self.relays.get(key, [])

    def latest_applied_before(self, t: int) -> int | None:
        """Highest snapshot epoch whose SnapshotApplied was recorded before `t`."""
        epochs = [n for n, t_j in self._applied_order if t_j < t]
        return max(epochs) if epochs else None


TraceLike = TraceIndex | Sequence[TraceEvent]


def _index(trace: TraceLike) -> TraceIndex:
    return trace if isinstance(trace, TraceIndex) else TraceIndex(trace)


def _query_pair(ix: TraceIndex, query_id: int) -> tuple[TraceEvent, TraceEvent]:
    start = ix.query_starts.get(query_id)
    end = ix.query_ends.get(query_id)
    if start is None or end is None:
        raise IncompleteTrace(f"query {query_id} lacks its QueryStart or QueryEnd event")
    return start, end


def _returned(end: QueryEndPayload) -> defaultdict[ActorId, list[Point]]:
    hits: defaultdict[ActorId, list[Point]] = defaultdict(list)
    for hit in end.results:
        hits[hit.actor].append(hit.location)
    return hits


# Freshness

def _crosses_cells(grid: GridConfig | None, locations: list[Point]) -> bool:
    if grid is None:
        return len(set(locations)) > 1
    return len({cell_of(grid, pt) for pt in locations}) > 1


def fresh_query_verdict(
    ix: TraceIndex, start: TraceEvent, end: TraceEvent, grid: GridConfig | None = None
) -> Verdict:
    assert isinstance(start.payload, QueryStartPayload) and isinstance(end.payload, QueryEndPayload)
    t_s, t_e = start.time, end.time
    window: Envelope = start.payload.window
    qid = start.payload.query_id
    returned = _returned(end.payload)
    problems: list[str] = []
    ambiguous = False

    for actor in returned:
        h = ix.history(actor)
        if h is None or h.spawn_time is None or h.spawn_time > t_e:
            problems.append(f"query {qid} returned unknown actor {actor}")

    for actor, h in ix.histories.items():
        if h.spawn is None or h.spawn_time is None or h.spawn_time > t_e:
            continue
        lo = bisect_left(h.move_times, t_s)
        pre = h.moves[lo - 1].dest if lo else h.spawn.location
        locations = [pre]
        for move in h.moves[lo:]:
            if move.t_start > t_e:
                break
            locations.append(move.dest)
        inside = [envelope_contains(window, pt) for pt in locations]
        got = returned.get(actor, [])

        # a cross-cell move is two index turns, so a reader may see the actor in both cells
        if len(got) > 1 and (len(set(got)) < len(got) or not _crosses_cells(grid, locations)):
            problems.append(f"query {qid} returned {actor} {len(got)} times")
        for pt in got:
            if pt not in locations:
                problems.append(f"query {qid} returned {actor} at {pt.as_tuple()}, never its location in the window")
            elif not envelope_contains(window, pt):
                problems.append(f"query {qid} returned {actor} at {pt.as_tuple()} outside the range")

        spawned_in_window = h.spawn_time >= t_s
        if not got and all(inside):
            if spawned_in_window or _crosses_cells(grid, locations):
                ambiguous = True
            else:
                problems.append(
                    f"query {qid} missed {actor} at {locations[-1].as_tuple()} inside the range "
                    f"for the whole window"
                )
        elif any(inside) and not all(inside):
            ambiguous = True

    if problems:
        return fail("; ".join(problems[:_MAX_WITNESSES]))
    return AMBIGUOUS if ambiguous else PASS


def check_fresh_query(trace: TraceLike, query_id: int, grid: GridConfig | None = None) -> Verdict:
    """Validate one range query against the Freshness semantics.

    An actor that stayed put for the whole query window must be returned exactly when its
    location is in the range. An actor that moved during the window must be returned when all
    of its window locations are in the range, must not be returned when none are, and may go
    either way otherwise. A returned location must be one the actor held during the window.

    Raises:
        IncompleteTrace: the query has no start or end event
    """
    ix = _index(trace)
    start, end = _query_pair(ix, query_id)
    return fresh_query_verdict(ix, start, end, grid)


def _fresh_fired_verdicts(ix: TraceIndex) -> Iterator[Verdict]:
    seen: Counter[tuple[ActorId, ActorId, int]] = Counter()
    for event in ix.reactions:
        p = event.payload
        assert isinstance(p, ReactionFiredPayload)
        sensor, t = event.actor, event.time
        key = (sensor, p.mover, p.mover_t_u)
        seen[key] += 1
        if seen[key] > 1:
            yield fail(f"{sensor} reacted twice to the move of {p.mover} at {p.mover_t_u}")
            continue
        if p.mover == sensor:
            yield fail(f"{sensor} reacted to its own move at {p.mover_t_u}")
            continue
        mover = ix.history(p.mover)
        move = mover.move_at(p.mover_t_u) if mover else None
        if move is None:
            yield fail(f"{sensor} reacted to a move of {p.mover} at {p.mover_t_u} that never completed")
            continue
        h = ix.histories[sensor]
        predicate = h.predicate_at(t)
        location = h.location_before(t)
        if predicate is None or location is None or h.spawn is None:
            yield fail(f"{sensor} reacted at {t} without reactive sensing on")
            continue
        hop = Segment(start=move.source, end=move.dest)
        if not eval_predicate(predicate, hop, h.fence(location)):
            yield fail(
                f"spurious reaction: {sensor} reacted to {p.mover} at {p.mover_t_u}, whose hop does not "
                f"{predicate.value} its fence at {location.as_tuple()}"
            )
            continue
        yield PASS


def _fresh_owed_verdicts(ix: TraceIndex) -> Iterator[Verdict]:
    fired = {
        (e.actor, e.payload.mover, e.payload.mover_t_u)
        for e in ix.reactions
        if isinstance(e.payload, ReactionFiredPayload)
    }
    sensors = [(s, ix.histories[s]) for s in ix.sensors()]
    for mover, mh in ix.histories.items():
        for t_u, move in zip(mh.move_times, mh.moves):
            relays = ix.relay_times(mover, t_u=t_u)
            if not relays:
                continue
            e_min, e_max = min(relays), max(relays)
            hop = Segment(start=move.source, end=move.dest)
            hop_box = Envelope.of(
                min(hop.start.x, hop.end.x),
                min(hop.start.y, hop.end.y),
                max(hop.start.x, hop.end.x),
                max(hop.start.y, hop.end.y),
            )
            for sensor, h in sensors:
                if sensor == mover or (sensor, mover, t_u) in fired or h.spawn is None:
                    continue
                location = h.location_before(t_u, inclusive=True)
                if location is None:
                    continue
                fence = h.fence(location)
                if not fence.bounds().intersects(hop_box):
                    continue
                predicate = h.predicate_at(e_min)
                if predicate is None:
                    continue

                # fences the sensor may have held when the update was delivered
                candidates = [fence]
                idx = bisect_right(h.move_times, t_u)
                for later in h.moves[idx:]:
                    if later.t_req > e_max:
                        break
                    candidates.append(h.fence(later.dest))
                holds = [eval_predicate(predicate, hop, f) for f in candidates]

                if all(holds):
                    if h.sensing_changes_after(e_min) or h.moving_during(e_min, e_max):
                        yield AMBIGUOUS
                    else:
                        yield fail(
                            f"missed reaction: {mover}'s hop at {t_u} {predicate.value}es every "
                            f"fence {sensor} held, but {sensor} never reacted"
                        )
                elif any(holds):
                    yield AMBIGUOUS
                else:
                    yield PASS


def fresh_reaction_verdicts(ix: TraceIndex) -> list[Verdict]:
    return [*_fresh_fired_verdicts(ix), *_fresh_owed_verdicts(ix)]


def check_fresh_reactions(trace: TraceLike) -> Verdict:
    """Validate every reaction, fired or owed, against the Freshness semantics.

    A fired reaction needs a completed hop of another actor that satisfies the sensor's
    predicate against the fence the sensor held when it reacted. A hop that satisfies the
    predicate against every fence the sensor could have held between the move and the last
    relay of that hop must have produced a reaction; fences the sensor moved through in that
    interval make the case ambiguous when the predicate held for only some of them.
    """
    return combine(fresh_reaction_verdicts(_index(trace)))


# Snapshot

def expected_snapshot(ix: TraceIndex, version: int) -> dict[ActorId, Point]:
    """Index content of snapshot `version`: every actor's last flushed location up to it."""
    content: dict[ActorId, Point] = {}
    for actor, h in ix.histories.items():
        idx = bisect_right(h.flush_epochs, version)
        if idx:
            _t, flush = h.flushes[h.flush_epochs[idx - 1]]
            content[actor] = flush.itinerary.last
    return content


def flush_verdicts(ix: TraceIndex) -> Iterator[Verdict]:
    """Every flushed itinerary must hold exactly the moves completed since the previous flush."""
    for actor, h in ix.histories.items():
        if h.spawn is None or h.spawn_time is None:
            if h.flush_epochs:
                yield fail(f"{actor} flushed without ever being spawned")
            continue
        prev_epoch: int | None = None
        prev_time = h.spawn_time
        prev_point, prev_stamp = h.spawn.location, h.spawn_time
        for epoch in h.flush_epochs:
            t_f, flush = h.flushes[epoch]
            iti = flush.itinerary
            lo = bisect_right(h.move_times, prev_time)
            hi = bisect_left(h.move_times, t_f)
            expected = Itinerary(
                points=(prev_point, *(m.dest for m in h.moves[lo:hi])),
                timestamps=(prev_stamp, *h.move_times[lo:hi]),
            )
            if prev_epoch is not None and epoch != prev_epoch + 1:
                yield fail(f"{actor} flushed epoch {epoch} right after epoch {prev_epoch}")
            elif iti != expected:
                yield fail(
                    f"{actor}'s epoch {epoch} itinerary ends at {iti.last.as_tuple()} but its moves "
                    f"before the flush end at {expected.last.as_tuple()}"
                )
            else:
                yield PASS
            prev_epoch, prev_time = epoch, t_f
            prev_point, prev_stamp = iti.last, iti.timestamps[-1]


def snapshot_query_verdict(ix: TraceIndex, start: TraceEvent, end: TraceEvent) -> Verdict:
    assert isinstance(start.payload, QueryStartPayload) and isinstance(end.payload, QueryEndPayload)
    qid = start.payload.query_id
    p = end.payload
    if p.version is None:
        return fail(f"query {qid} carries no snapshot version")
    if any(v != p.version for v in p.cell_versions):
        return fail(f"query {qid} mixed index versions {sorted(set(p.cell_versions))}")
    newest = ix.latest_applied_before(start.time)
    if newest is not None and newest > p.version:
        return fail(f"query {qid} read version {p.version} after snapshot {newest} was complete")

    window = start.payload.window
    expected = {a: pt for a, pt in expected_snapshot(ix, p.version).items() if envelope_contains(window, pt)}
    returned = _returned(p)
    problems: list[str] = []
    for actor, points in returned.items():
        if len(points) > 1:
            problems.append(f"query {qid} returned {actor} {len(points)} times")
        elif actor not in expected:
            problems.append(f"query {qid} returned {actor}, absent from snapshot {p.version} in the range")
        elif points[0] != expected[actor]:
            problems.append(
                f"query {qid} returned {actor} at {points[0].as_tuple()}, snapshot {p.version} "
                f"has it at {expected[actor].as_tuple()}"
            )
    for actor in expected.keys() - returned.keys():
        problems.append(f"query {qid} missed {actor} at {expected[actor].as_tuple()} in snapshot {p.version}")
    if problems:
        return fail("; ".join(problems[:_MAX_WITNESSES]))
    return PASS


def snapshot_content_verdicts(ix: TraceIndex) -> list[Verdict]:
    verdicts = list(flush_verdicts(ix))
    for qid, end in ix.query_ends.items():
        start = ix.query_starts.get(qid)
        if start is None:
            raise IncompleteTrace(f"query {qid} ended without a QueryStart event")
        verdicts.append(snapshot_query_verdict(ix, start, end))
    return verdicts


def check_snapshot_contents(trace: TraceLike) -> Verdict:
    """Validate flushed itineraries and every query result against its snapshot version.

    Snapshot v holds, for each actor, the last location it flushed for an epoch up to v. A
    query must read one version on all of its cells, must not read a version older than a
    snapshot completed before it started, and must return that version's content in range.
    """
    return combine(snapshot_content_verdicts(_index(trace)))


def closed_fence(ix: TraceIndex, sensor: ActorId, epoch: int) -> tuple[ConvexPolygon, Predicate, int] | None:
    """Accumulated fence a sensor closed for `epoch`, its predicate and the flush time.

    None when the sensor did not flush that epoch while sensing.
    """
    h = ix.history(sensor)
    if h is None or h.spawn is None or epoch not in h.flushes:
        return None
    t_f, flush = h.flushes[epoch]
    predicate = h.predicate_at(t_f)
    since = h.sensing_since(t_f)
    if predicate is None or since is None:
        return None
    iti = flush.itinerary
    anchor = [pt for pt, ts in zip(iti.points, iti.timestamps) if ts <= since][-1:]
    later = [pt for pt, ts in zip(iti.points, iti.timestamps) if ts > since]
    vertices = [v for pt in (*anchor, *later) for v in h.fence(pt).vertices]
    return convex_hull(vertices), predicate, t_f


def _itinerary_box(iti: Itinerary) -> Envelope:
    xs = [pt.x for pt in iti.points]
    ys = [pt.y for pt in iti.points]
    return Envelope.of(min(xs), min(ys), max(xs), max(ys))


def snap_reaction_verdicts(ix: TraceIndex, fence_retention_epochs: int = 3) -> list[Verdict]:
    counts: Counter[tuple[ActorId, ActorId, int]] = Counter()
    verdicts: list[Verdict] = []
    for event in ix.reactions:
        p = event.payload
        assert isinstance(p, ReactionFiredPayload)
        if p.epoch is None:
            verdicts.append(fail(f"{event.actor} reacted to {p.mover} without a snapshot epoch"))
            continue
        counts[(event.actor, p.mover, p.epoch)] += 1
        mover = ix.history(p.mover)
        if p.mover == event.actor:
            verdicts.append(fail(f"{event.actor} reacted to its own epoch {p.epoch} itinerary"))
        elif mover is None or p.epoch not in mover.flushes:
            verdicts.append(fail(f"{event.actor} reacted to epoch {p.epoch} of {p.mover}, which never flushed it"))

    fences: dict[tuple[ActorId, int], tuple[ConvexPolygon, Predicate, int] | None] = {}
    sensors = ix.sensors()
    for mover, mh in ix.histories.items():
        for epoch in mh.flush_epochs:
            _t, flush = mh.flushes[epoch]
            iti = flush.itinerary
            box = _itinerary_box(iti)
            relays = ix.relay_times(mover, epoch=epoch)
            for sensor in sensors:
                if sensor == mover:
                    continue
                n = counts.get((sensor, mover, epoch), 0)
                if (sensor, epoch) not in fences:
                    fences[(sensor, epoch)] = closed_fence(ix, sensor, epoch)
                closed = fences[(sensor, epoch)]
                if closed is None:
                    if n:
                        verdicts.append(fail(f"{sensor} reacted to {mover} in epoch {epoch} without sensing"))
                    continue
                fence, predicate, t_f = closed
                if not n and not fence.bounds().intersects(box):
                    continue
                if n > 1:
                    verdicts.append(fail(f"{sensor} reacted {n} times to {mover} in epoch {epoch}"))
                    continue
                holds = not iti.stationary and eval_itinerary(predicate, iti, fence)
                if holds and n == 0:
                    sh = ix.histories[sensor]
                    retention_flush = sh.flushes.get(epoch + fence_retention_epochs)
                    late_relay = (
                        not relays
                        or t_f > min(relays)
                        or sh.sensing_changes_after(t_f)
                        or (retention_flush is not None and retention_flush[0] <= max(relays))
                    )
                    if late_relay:
                        verdicts.append(AMBIGUOUS)
                    else:
                        verdicts.append(
                            fail(
                                f"missed reaction: {mover}'s epoch {epoch} itinerary {predicate.value}es "
                                f"the accumulated fence of {sensor}, which never reacted"
                            )
                        )
                elif not holds and n == 1:
                    verdicts.append(
                        fail(
                            f"spurious reaction: {sensor} reacted to {mover} in epoch {epoch} but the "
                            f"itinerary does not {predicate.value} its accumulated fence"
                        )
                    )
                else:
                    verdicts.append(PASS)
    return verdicts


def check_snap_reactions(trace: TraceLike, fence_retention_epochs: int = 3) -> Verdict:
    """Validate reactions against the Snapshot semantics.

    For every sensor, mover and epoch the sensor reacts exactly once when the mover's epoch
    itinerary satisfies the predicate against the sensor's accumulated fence of that epoch,
    and never otherwise.
    """
    return combine(snap_reaction_verdicts(_index(trace), fence_retention_epochs))


# Whole trace

def verify_trace(
    events: TraceLike,
    semantics: Semantics,
    *,
    grid: GridConfig | None = None,
    fence_retention_epochs: int = 3,
) -> VerificationSummary:
    """Run every check that applies to `semantics` and tally the verdicts.

    Queries that never completed (a Snapshot query that gave up after its retries) are
    skipped.
    """
    ix = _index(events)
    summary = VerificationSummary(semantics=semantics)
    if semantics is Semantics.FRESH:
        for qid, start in ix.query_starts.items():
            end = ix.query_ends.get(qid)
            if end is None:
                Actor.log.debug(f"Query {qid} has no QueryEnd, skipping")
                continue
            summary.add(fresh_query_verdict(ix, start, end, grid))
        for verdict in fresh_reaction_verdicts(ix):
            summary.add(verdict)
    else:
        for verdict in snapshot_content_verdicts(ix):
            summary.add(verdict)
        for verdict in snap_reaction_verdicts(ix, fence_retention_epochs):
            summary.add(verdict)

    Actor.log.info(
        f"Verified {len(ix.events)} events under {semantics.value}: {summary.checks} checks, "
        f"{summary.failed} failed, {summary.ambiguous} ambiguous"
    )
    for witness in summary.failures[:_MAX_WITNESSES]:
        Actor.log.warning(f"Oracle failure: {witness}")
    return summary
