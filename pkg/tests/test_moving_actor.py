"""End-to-end tests of the moving actor API under both semantics."""

from collections import Counter

import numpy as np
import pytest

from src.config import DatabaseConfig
from src.database import MovingActorDatabase
from src.errors import OutOfBounds, SnapshotUnstable
from src.grid import cell_of
from src.models import (
    ActorId,
    Envelope,
    LookupResult,
    Point,
    Predicate,
    QueryEndPayload,
    ReactionEvent,
    Semantics,
    TraceEventKind,
)
from src.moving_actor import MovingActor
from src.spatial_actors import monitor_id
from src.trace_oracle import verify_trace

EVERYTHING = Envelope.of(0, 0, 4000, 4000)


async def _latest_applied(db: MovingActorDatabase) -> int:
    applied = [e.n for e in await db.snapshot_epochs() if e.t_j is not None]
    return max(applied, default=0)


async def _wait_rounds(db: MovingActorDatabase, rounds: int) -> None:
    await db.wait_for_snapshot(await _latest_applied(db) + rounds, timeout_s=10)


def _count_sends(db: MovingActorDatabase, monkeypatch: pytest.MonkeyPatch) -> Counter[str]:
    """Count every message the kernel accepts from now on, by method."""
    sent: Counter[str] = Counter()
    enqueue = db.kernel._enqueue

    def counting(target, method, args, kwargs, want_reply):
        sent[method] += 1
        return enqueue(target, method, args, kwargs, want_reply)

    monkeypatch.setattr(db.kernel, "_enqueue", counting)
    return sent


class TestFreshMoves:
    """Moves and range queries under Freshness."""

    async def test_spawn_is_visible(self, fresh_db: MovingActorDatabase):
        """Test a spawned actor is found at its location."""
        a = await fresh_db.spawn(1, Point(x=500, y=500))
        assert await fresh_db.location(a) == Point(x=500, y=500)
        assert await fresh_db.find_actors(a, Envelope.of(0, 0, 1000, 1000)) == [(a, Point(x=500, y=500))]

    async def test_duplicate_spawn(self, fresh_db: MovingActorDatabase):
        """Test spawning the same actor twice raises."""
        await fresh_db.spawn(1, Point(x=500, y=500))
        with pytest.raises(ValueError):
            await fresh_db.spawn(1, Point(x=600, y=600))

    async def test_move_is_visible_when_it_completes(self, fresh_db: MovingActorDatabase):
        """Test a completed move is seen by the next query, across a cell boundary."""
        a = await fresh_db.spawn(1, Point(x=500, y=500))
        b = await fresh_db.spawn(2, Point(x=3500, y=3500))
        await fresh_db.move(a, Point(x=2500, y=500))
        hits = await fresh_db.find_actors(b, Envelope.of(2000, 0, 3000, 1000))
        assert hits == [(a, Point(x=2500, y=500))]
        assert await fresh_db.find_actors(b, Envelope.of(0, 0, 1000, 1000)) == []

    async def test_one_index_entry_per_actor(self, fresh_db: MovingActorDatabase):
        """Test that after many cross-cell moves each actor is indexed exactly once."""
        actors = [await fresh_db.spawn(i, Point(x=100 + 300 * i, y=200)) for i in range(10)]
        for step in range(5):
            for i, a in enumerate(actors):
                await fresh_db.move(a, Point(x=(100 + 300 * i + 700 * step) % 4000, y=200 + 600 * step))
        await fresh_db.quiesce(timeout_s=5)
        counts = await fresh_db.index_entry_counts()
        assert set(counts) == set(actors)
        assert all(n == 1 for n in counts.values())
        census = await fresh_db.index_census()
        for a in actors:
            assert census[a] == await fresh_db.location(a)

    async def test_queries_match_brute_force(self, fresh_db: MovingActorDatabase):
        """Test quiescent range queries return exactly the actors a linear scan finds."""
        rng = np.random.default_rng(11)
        actors = [
            await fresh_db.spawn(i, Point(x=float(x), y=float(y)))
            for i, (x, y) in enumerate(rng.uniform(0, 3999, size=(40, 2)))
        ]
        for a in actors:
            x, y = rng.uniform(0, 3999, size=2)
            await fresh_db.move(a, Point(x=float(x), y=float(y)))
        await fresh_db.quiesce(timeout_s=5)
        locations = {a: await fresh_db.location(a) for a in actors}

        for _ in range(200):
            xs = np.sort(rng.uniform(0, 4000, size=2))
            ys = np.sort(rng.uniform(0, 4000, size=2))
            window = Envelope.of(float(xs[0]), float(ys[0]), float(xs[1]), float(ys[1]))
            expected = {
                (a, pt)
                for a, pt in locations.items()
                if window.min.x <= pt.x <= window.max.x and window.min.y <= pt.y <= window.max.y
            }
            hits = await fresh_db.find_actors(actors[0], window)
            assert len(hits) == len(expected)
            assert set(hits) == expected

    async def test_move_outside_space(self, fresh_db: MovingActorDatabase):
        """Test a move out of the space is refused."""
        a = await fresh_db.spawn(1, Point(x=500, y=500))
        with pytest.raises(OutOfBounds):
            await fresh_db.move(a, Point(x=5000, y=500))

    async def test_query_boundary_is_inclusive(self, fresh_db: MovingActorDatabase):
        """Test an actor on the window edge is returned."""
        a = await fresh_db.spawn(1, Point(x=1000, y=1000))
        assert await fresh_db.find_actors(a, Envelope.of(0, 0, 1000, 1000)) == [(a, Point(x=1000, y=1000))]

    async def test_cross_cell_move_messages(self, fresh_db: MovingActorDatabase, monkeypatch):
        """Test a move into the next cell updates both indexes and relays to both monitors."""
        a = await fresh_db.spawn(1, Point(x=500, y=400))
        await fresh_db.quiesce(timeout_s=5)
        sent = _count_sends(fresh_db, monkeypatch)
        await fresh_db.move(a, Point(x=1500, y=400))
        await fresh_db.quiesce(timeout_s=5)
        assert sent == Counter({"move": 1, "update": 2, "relay": 2})

    async def test_same_cell_move_messages(self, fresh_db: MovingActorDatabase, monkeypatch):
        """Test a move within one cell updates one index and relays to one monitor."""
        a = await fresh_db.spawn(1, Point(x=500, y=400))
        await fresh_db.quiesce(timeout_s=5)
        sent = _count_sends(fresh_db, monkeypatch)
        await fresh_db.move(a, Point(x=700, y=600))
        await fresh_db.quiesce(timeout_s=5)
        assert sent == Counter({"move": 1, "update": 1, "relay": 1})


class TestFreshReactions:
    """Reactive sensing under Freshness."""

    async def test_cross_fires_once(self, fresh_db: MovingActorDatabase):
        """Test a mover entering the sensor's fence triggers exactly one reaction."""
        reactions: list[ReactionEvent] = []
        sensor = await fresh_db.spawn(1, Point(x=500, y=500))
        mover = await fresh_db.spawn(2, Point(x=2500, y=500))
        await fresh_db.start_reactive_sensing(sensor, Predicate.CROSS, reactions.append)
        t_u = await fresh_db.move(mover, Point(x=500, y=500))
        await fresh_db.quiesce(timeout_s=5)
        assert len(reactions) == 1
        assert reactions[0].sensor == sensor
        assert reactions[0].mover == mover
        assert reactions[0].mover_t_u == t_u
        assert reactions[0].epoch is None

    async def test_relays_from_two_cells_react_once(self, fresh_db: MovingActorDatabase, monkeypatch):
        """Test a sensor subscribed to two cells of the same hop reacts to it once."""
        reactions: list[ReactionEvent] = []
        sensor = await fresh_db.spawn(1, Point(x=1000, y=400))
        mover = await fresh_db.spawn(2, Point(x=2500, y=400))
        await fresh_db.start_reactive_sensing(sensor, Predicate.CROSS, reactions.append)
        assert sensor in fresh_db.kernel.subscribers(0)
        assert sensor in fresh_db.kernel.subscribers(1)
        await fresh_db.quiesce(timeout_s=5)
        sent = _count_sends(fresh_db, monkeypatch)
        await fresh_db.move(mover, Point(x=800, y=400))
        await fresh_db.quiesce(timeout_s=5)
        # monitors of cells 0, 1 and 2 relay; the sensor listens on 0 and 1
        assert sent["relay"] == 3
        assert sent["stream_update"] == 2
        assert len(reactions) == 1
        actor = fresh_db.kernel.get_actor(sensor)
        assert isinstance(actor, MovingActor)
        assert actor.reaction_count == 1

    async def test_no_reaction_far_away(self, fresh_db: MovingActorDatabase):
        """Test moves far from a sensor do not trigger it."""
        reactions: list[ReactionEvent] = []
        sensor = await fresh_db.spawn(1, Point(x=500, y=500))
        mover = await fresh_db.spawn(2, Point(x=3500, y=3500))
        await fresh_db.start_reactive_sensing(sensor, Predicate.CROSS, reactions.append)
        await fresh_db.move(mover, Point(x=3500, y=2500))
        await fresh_db.quiesce(timeout_s=5)
        assert reactions == []

    async def test_own_moves_do_not_react(self, fresh_db: MovingActorDatabase):
        """Test a sensor does not react to its own moves."""
        reactions: list[ReactionEvent] = []
        sensor = await fresh_db.spawn(1, Point(x=500, y=500))
        await fresh_db.start_reactive_sensing(sensor, Predicate.OVERLAP, reactions.append)
        await fresh_db.move(sensor, Point(x=700, y=500))
        await fresh_db.quiesce(timeout_s=5)
        assert reactions == []

    async def test_end_sensing_stops_reactions(self, fresh_db: MovingActorDatabase):
        """Test no reactions arrive after sensing ends."""
        reactions: list[ReactionEvent] = []
        sensor = await fresh_db.spawn(1, Point(x=500, y=500))
        mover = await fresh_db.spawn(2, Point(x=2500, y=500))
        await fresh_db.start_reactive_sensing(sensor, Predicate.CROSS, reactions.append)
        await fresh_db.end_reactive_sensing(sensor)
        await fresh_db.move(mover, Point(x=500, y=500))
        await fresh_db.quiesce(timeout_s=5)
        assert reactions == []
        # ending twice is a no-op
        await fresh_db.end_reactive_sensing(sensor)

    async def test_restart_replaces_predicate(self, fresh_db: MovingActorDatabase):
        """Test enabling sensing again switches to the new predicate."""
        reactions: list[ReactionEvent] = []
        sensor = await fresh_db.spawn(1, Point(x=500, y=500))
        mover = await fresh_db.spawn(2, Point(x=300, y=300))
        await fresh_db.start_reactive_sensing(sensor, Predicate.CROSS, reactions.append)
        await fresh_db.start_reactive_sensing(sensor, Predicate.COVER, reactions.append)
        await fresh_db.move(mover, Point(x=600, y=600))
        await fresh_db.quiesce(timeout_s=5)
        assert len(reactions) == 1

    async def test_async_callback(self, fresh_db: MovingActorDatabase):
        """Test a coroutine callback is awaited."""
        seen: list[ReactionEvent] = []

        async def react(event: ReactionEvent) -> None:
            seen.append(event)

        sensor = await fresh_db.spawn(1, Point(x=500, y=500))
        mover = await fresh_db.spawn(2, Point(x=2500, y=500))
        await fresh_db.start_reactive_sensing(sensor, Predicate.CROSS, react)
        await fresh_db.move(mover, Point(x=500, y=500))
        await fresh_db.quiesce(timeout_s=5)
        assert len(seen) == 1

    async def test_trace_passes_oracle(self, fresh_db: MovingActorDatabase):
        """Test a small mixed workload produces a trace the oracle accepts."""
        reactions: list[ReactionEvent] = []
        actors = [await fresh_db.spawn(i, Point(x=250 + 500 * i, y=500)) for i in range(6)]
        await fresh_db.start_reactive_sensing(actors[0], Predicate.CROSS, reactions.append)
        await fresh_db.start_reactive_sensing(actors[3], Predicate.OVERLAP, reactions.append)
        for step in range(4):
            for i, a in enumerate(actors):
                await fresh_db.move(a, Point(x=250 + 500 * ((i + step) % 8), y=500 + 400 * step))
                await fresh_db.find_actors(a, Envelope.of(0, 0, 2000, 2000))
        await fresh_db.quiesce(timeout_s=5)
        summary = verify_trace(fresh_db.tracer.events(), Semantics.FRESH, grid=fresh_db.grid)
        assert summary.failed == 0, summary.failures
        assert summary.checks > 0


class TestSnapshotMoves:
    """Buffered moves and versioned queries under Snapshot."""

    async def test_moves_appear_with_a_later_snapshot(self, snap_db: MovingActorDatabase):
        """Test a move becomes visible once its epoch is applied."""
        a = await snap_db.spawn(1, Point(x=500, y=500))
        await snap_db.move(a, Point(x=2500, y=500))
        await _wait_rounds(snap_db, 2)
        hits = await snap_db.find_actors(a, EVERYTHING)
        assert hits == [(a, Point(x=2500, y=500))]

    async def test_query_reads_one_version(self, snap_db: MovingActorDatabase):
        """Test every completed query saw the same version in all of its cells."""
        actors = [await snap_db.spawn(i, Point(x=300 + 900 * i, y=300 + 900 * i)) for i in range(4)]
        await _wait_rounds(snap_db, 1)
        for a in actors:
            await snap_db.find_actors(a, EVERYTHING)
        ends = [e.payload for e in snap_db.tracer.events() if e.kind is TraceEventKind.QUERY_END]
        assert len(ends) == 4
        for end in ends:
            assert isinstance(end, QueryEndPayload)
            assert len(set(end.cell_versions)) == 1
            assert end.version == end.cell_versions[0]

    async def test_residency_follows_location(self, snap_db: MovingActorDatabase):
        """Test each actor ends up a resident of exactly the cell it stands in."""
        a = await snap_db.spawn(1, Point(x=500, y=500))
        b = await snap_db.spawn(2, Point(x=3500, y=500))
        await snap_db.move(a, Point(x=1500, y=2500))
        await snap_db.move(b, Point(x=3500, y=3500))
        await _wait_rounds(snap_db, 3)
        residents = await snap_db.resident_census()
        assert residents[a] == cell_of(snap_db.grid, Point(x=1500, y=2500))
        assert residents[b] == cell_of(snap_db.grid, Point(x=3500, y=3500))

    async def test_epochs_complete_in_order(self, snap_db: MovingActorDatabase):
        """Test snapshot epochs complete in increasing order."""
        await snap_db.spawn(1, Point(x=500, y=500))
        await _wait_rounds(snap_db, 3)
        epochs = [e for e in await snap_db.snapshot_epochs() if e.t_j is not None]
        assert [e.n for e in epochs] == list(range(epochs[0].n, epochs[0].n + len(epochs)))
        assert all(e.t_i <= e.t_j for e in epochs)
        assert all(x.t_j < y.t_j for x, y in zip(epochs, epochs[1:]))

    async def test_moves_are_only_buffered(self, snap_config: DatabaseConfig, monkeypatch):
        """Test moves between two flushes send nothing but the move requests themselves."""
        config = snap_config.model_copy(update={"snapshot_interval_ms": 5000})
        async with MovingActorDatabase(config) as db:
            a = await db.spawn(1, Point(x=500, y=500))
            await db.quiesce(timeout_s=5)
            sent = _count_sends(db, monkeypatch)
            for i in range(5):
                await db.move(a, Point(x=600 + 100 * i, y=500 + 300 * i))
            await db.quiesce(timeout_s=5)
            assert sent == Counter({"move": 5})
            actor = db.kernel.get_actor(a)
            assert isinstance(actor, MovingActor)
            assert actor.buffer is not None
            assert len(actor.buffer.points) == 6
            assert actor.buffer.last == Point(x=1000, y=1700)
            assert db.tracer.count(TraceEventKind.FLUSH_SENT) == 0

    async def test_query_gives_up_on_mixed_versions(self, snap_config: DatabaseConfig, monkeypatch):
        """Test a query that keeps reading two versions fails once its retries are used up."""
        config = snap_config.model_copy(update={"query_max_retries": 2})
        lookups = 0

        async def mixed(self, cells, window):
            nonlocal lookups
            lookups += 1
            return [LookupResult(cell=cell, entries=(), version=cell % 2) for cell in cells]

        monkeypatch.setattr(MovingActor, "_lookup", mixed)
        async with MovingActorDatabase(config) as db:
            a = await db.spawn(1, Point(x=1000, y=1000))
            with pytest.raises(SnapshotUnstable):
                await db.find_actors(a, Envelope.of(500, 500, 1500, 1500))
        assert lookups == 3


class TestSnapshotReactions:
    """Reactive sensing against closed epoch fences."""

    async def test_cross_fires_for_the_epoch(self, snap_db: MovingActorDatabase):
        """Test a crossing within an epoch fires once for that epoch."""
        reactions: list[ReactionEvent] = []
        sensor = await snap_db.spawn(1, Point(x=500, y=500))
        mover = await snap_db.spawn(2, Point(x=2500, y=500))
        await snap_db.start_reactive_sensing(sensor, Predicate.CROSS, reactions.append)
        await _wait_rounds(snap_db, 1)
        await snap_db.move(mover, Point(x=500, y=500))
        await _wait_rounds(snap_db, 3)
        assert len(reactions) == 1
        assert reactions[0].mover == mover
        assert reactions[0].epoch is not None

    async def test_trace_passes_oracle(self, snap_db: MovingActorDatabase):
        """Test the recorded Snapshot trace passes the oracle."""
        reactions: list[ReactionEvent] = []
        actors = [await snap_db.spawn(i, Point(x=250 + 500 * i, y=500)) for i in range(6)]
        await snap_db.start_reactive_sensing(actors[0], Predicate.CROSS, reactions.append)
        for step in range(3):
            for i, a in enumerate(actors):
                await snap_db.move(a, Point(x=250 + 500 * ((i + step) % 8), y=500 + 400 * step))
            await _wait_rounds(snap_db, 1)
            await snap_db.find_actors(actors[step], EVERYTHING)
        await _wait_rounds(snap_db, 2)
        summary = verify_trace(
            snap_db.tracer.events(),
            Semantics.SNAP,
            grid=snap_db.grid,
            fence_retention_epochs=snap_db.config.fence_retention_epochs,
        )
        assert summary.failed == 0, summary.failures

    async def test_multi_hop_itinerary_reacts_once(self, snap_db: MovingActorDatabase):
        """Test a three-hop epoch relayed through two of the sensor's cells triggers one reaction."""
        reactions: list[ReactionEvent] = []
        sensor = await snap_db.spawn(1, Point(x=1000, y=400))
        mover = await snap_db.spawn(2, Point(x=2500, y=400))
        await snap_db.start_reactive_sensing(sensor, Predicate.CROSS, reactions.append)
        await _wait_rounds(snap_db, 1)
        for x in (1800, 1200, 800):
            await snap_db.move(mover, Point(x=x, y=400))
        await _wait_rounds(snap_db, 3)

        assert len(reactions) == 1
        epoch = reactions[0].epoch
        events = snap_db.tracer.events()
        flushed = [
            e.payload.itinerary
            for e in events
            if e.kind is TraceEventKind.FLUSH_SENT and e.actor == mover and e.payload.epoch == epoch
        ]
        assert len(flushed) == 1
        assert [p.x for p in flushed[0].points] == [2500, 1800, 1200, 800]
        relayed_by = {
            e.actor
            for e in events
            if e.kind is TraceEventKind.RELAYED and e.payload.mover == mover and e.payload.epoch == epoch
        }
        assert relayed_by == {monitor_id(0), monitor_id(1), monitor_id(2)}

    async def test_stationary_mover_is_not_reported_again(self, snap_db: MovingActorDatabase):
        """Test a mover that stops inside an Overlap fence triggers one reaction, not one per epoch."""
        reactions: list[ReactionEvent] = []
        sensor = await snap_db.spawn(1, Point(x=500, y=500))
        mover = await snap_db.spawn(2, Point(x=2500, y=500))
        await snap_db.start_reactive_sensing(sensor, Predicate.OVERLAP, reactions.append)
        await _wait_rounds(snap_db, 1)
        await snap_db.move(mover, Point(x=600, y=500))
        await _wait_rounds(snap_db, 5)

        assert len(reactions) == 1
        idle_flushes = [
            e
            for e in snap_db.tracer.events()
            if e.kind is TraceEventKind.FLUSH_SENT and e.actor == mover and len(e.payload.itinerary.points) == 1
        ]
        assert len(idle_flushes) >= 3
        summary = verify_trace(
            snap_db.tracer.events(),
            Semantics.SNAP,
            grid=snap_db.grid,
            fence_retention_epochs=snap_db.config.fence_retention_epochs,
        )
        assert summary.failed == 0, summary.failures


def test_actor_ids_are_moving():
    """Test moving actor ids carry the moving kind."""
    assert ActorId.moving(3).kind.value == "moving"
