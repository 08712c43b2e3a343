"""Canned execution traces for both semantics, plus perturbations that break them."""

from src.models import (
    CONTROLLER_ID,
    ActorId,
    ActorKind,
    Envelope,
    FlushSentPayload,
    Itinerary,
    MoveDonePayload,
    Point,
    Predicate,
    QueryEndPayload,
    QueryHit,
    QueryStartPayload,
    ReactionFiredPayload,
    RelayedPayload,
    SensingOnPayload,
    SnapshotAppliedPayload,
    SpawnedPayload,
    TraceEvent,
    TraceEventKind,
)

SENSOR = ActorId.moving(1)
MOVER = ActorId.moving(2)
BYSTANDER = ActorId.moving(3)
FENCE_SIDE = 1000.0


def _monitor(cell: int) -> ActorId:
    return ActorId(kind=ActorKind.MONITOR, key=cell)


def _spawned(time: int, actor: ActorId, x: float, y: float) -> TraceEvent:
    return TraceEvent(
        time=time,
        actor=actor,
        payload=SpawnedPayload(location=Point(x=x, y=y), fence_side=FENCE_SIDE),
    )


def _move(time: int, actor: ActorId, source: Point, dest: Point) -> TraceEvent:
    return TraceEvent(
        time=time,
        actor=actor,
        payload=MoveDonePayload(source=source, dest=dest, t_req=time - 10, t_start=time - 5),
    )


def generate_mock_fresh_trace() -> list[TraceEvent]:
    """A Freshness run that passes every check.

    The sensor sits at (500, 500) with a 1000 m fence. The mover crosses into the fence and
    the sensor reacts; a bystander moves far away; a query then sees both nearby actors.
    """
    return [
        _spawned(100, SENSOR, 500, 500),
        _spawned(110, MOVER, 2000, 500),
        _spawned(115, BYSTANDER, 8000, 8000),
        TraceEvent(time=120, actor=SENSOR, payload=SensingOnPayload(predicate=Predicate.CROSS)),
        _move(200, MOVER, Point(x=2000, y=500), Point(x=800, y=500)),
        TraceEvent(time=210, actor=_monitor(0), payload=RelayedPayload(mover=MOVER, mover_t_u=200)),
        TraceEvent(time=211, actor=_monitor(1), payload=RelayedPayload(mover=MOVER, mover_t_u=200)),
        TraceEvent(time=220, actor=SENSOR, payload=ReactionFiredPayload(mover=MOVER, mover_t_u=200)),
        TraceEvent(
            time=300,
            actor=SENSOR,
            payload=QueryStartPayload(query_id=300, window=Envelope.of(0, 0, 1000, 1000)),
        ),
        TraceEvent(
            time=320,
            actor=SENSOR,
            payload=QueryEndPayload(
                query_id=300,
                cell_versions=(0,),
                results=(
                    QueryHit(actor=SENSOR, location=Point(x=500, y=500)),
                    QueryHit(actor=MOVER, location=Point(x=800, y=500)),
                ),
            ),
        ),
        _move(400, BYSTANDER, Point(x=8000, y=8000), Point(x=8500, y=8000)),
        TraceEvent(time=410, actor=_monitor(88), payload=RelayedPayload(mover=BYSTANDER, mover_t_u=400)),
    ]


def generate_mock_snapshot_trace() -> list[TraceEvent]:
    """A Snapshot run over two epochs that passes every check.

    The mover crosses into the sensor's fence during epoch 1, so the sensor reacts once for
    epoch 1. In epoch 2 nobody moves, so nothing is relayed and nobody reacts. A query reads
    version 1.
    """
    sensor_home = Point(x=500, y=500)
    return [
        _spawned(100, SENSOR, 500, 500),
        _spawned(110, MOVER, 2000, 500),
        TraceEvent(time=120, actor=SENSOR, payload=SensingOnPayload(predicate=Predicate.CROSS)),
        _move(200, MOVER, Point(x=2000, y=500), Point(x=800, y=500)),
        TraceEvent(
            time=1000,
            actor=SENSOR,
            payload=FlushSentPayload(epoch=1, itinerary=Itinerary.single(sensor_home, 100)),
        ),
        TraceEvent(
            time=1001,
            actor=MOVER,
            payload=FlushSentPayload(
                epoch=1,
                itinerary=Itinerary(points=(Point(x=2000, y=500), Point(x=800, y=500)), timestamps=(110, 200)),
            ),
        ),
        TraceEvent(time=1010, actor=_monitor(0), payload=RelayedPayload(mover=MOVER, mover_t_u=200, epoch=1)),
        TraceEvent(time=1020, actor=SENSOR, payload=ReactionFiredPayload(mover=MOVER, mover_t_u=200, epoch=1)),
        TraceEvent(time=1100, actor=CONTROLLER_ID, payload=SnapshotAppliedPayload(epoch=1)),
        TraceEvent(
            time=1200,
            actor=SENSOR,
            payload=QueryStartPayload(query_id=1200, window=Envelope.of(0, 0, 1000, 1000)),
        ),
        TraceEvent(
            time=1210,
            actor=SENSOR,
            payload=QueryEndPayload(
                query_id=1200,
                version=1,
                cell_versions=(1, 1),
                results=(
                    QueryHit(actor=SENSOR, location=sensor_home),
                    QueryHit(actor=MOVER, location=Point(x=800, y=500)),
                ),
            ),
        ),
        TraceEvent(
            time=2000,
            actor=SENSOR,
            payload=FlushSentPayload(epoch=2, itinerary=Itinerary.single(sensor_home, 100)),
        ),
        TraceEvent(
            time=2001,
            actor=MOVER,
            payload=FlushSentPayload(epoch=2, itinerary=Itinerary.single(Point(x=800, y=500), 200)),
        ),
        TraceEvent(time=2100, actor=CONTROLLER_ID, payload=SnapshotAppliedPayload(epoch=2)),
    ]


# Perturbations

def drop_reaction(events: list[TraceEvent], index: int = 0) -> list[TraceEvent]:
    """Remove the `index`-th ReactionFired event."""
    reactions = [i for i, e in enumerate(events) if e.kind is TraceEventKind.REACTION_FIRED]
    victim = reactions[index]
    return [e for i, e in enumerate(events) if i != victim]


def inject_reaction(
    events: list[TraceEvent],
    *,
    time: int,
    sensor: ActorId,
    mover: ActorId,
    mover_t_u: int,
    epoch: int | None = None,
) -> list[TraceEvent]:
    injected = TraceEvent(
        time=time,
        actor=sensor,
        payload=ReactionFiredPayload(mover=mover, mover_t_u=mover_t_u, epoch=epoch),
    )
    return sorted([*events, injected], key=lambda e: e.time)


def shift_move(events: list[TraceEvent], actor: ActorId, new_time: int, index: int = 0) -> list[TraceEvent]:
    """Move the `index`-th MoveDone of `actor` to `new_time`, request and start times with it."""
    moves = [i for i, e in enumerate(events) if e.actor == actor and e.kind is TraceEventKind.MOVE_DONE]
    victim = moves[index]
    shifted = []
    for i, event in enumerate(events):
        if i == victim:
            p = event.payload
            assert isinstance(p, MoveDonePayload)
            delta = new_time - event.time
            event = TraceEvent(
                time=new_time,
                actor=actor,
                payload=p.model_copy(update={"t_req": p.t_req + delta, "t_start": p.t_start + delta}),
            )
        shifted.append(event)
    return sorted(shifted, key=lambda e: e.time)


def fresh_perturbations() -> dict[str, list[TraceEvent]]:
    """Broken variants of the Freshness trace, each of which must fail verification."""
    trace = generate_mock_fresh_trace()
    return {
        "dropped_reaction": drop_reaction(trace),
        "spurious_reaction": inject_reaction(trace, time=420, sensor=SENSOR, mover=BYSTANDER, mover_t_u=400),
        "update_after_query_start": shift_move(trace, MOVER, 350),
    }


def snapshot_perturbations() -> dict[str, list[TraceEvent]]:
    """Broken variants of the Snapshot trace, each of which must fail verification."""
    trace = generate_mock_snapshot_trace()
    return {
        "dropped_reaction": drop_reaction(trace),
        "spurious_reaction": inject_reaction(
            trace, time=2020, sensor=SENSOR, mover=MOVER, mover_t_u=200, epoch=2
        ),
        "update_across_epoch": shift_move(trace, MOVER, 1500),
    }
