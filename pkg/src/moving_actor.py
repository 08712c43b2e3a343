"""The Moving Actor: move, find_actors, reactive sensing and the reaction check.

Under Freshness a move updates the indexes before it completes and is relayed to the
monitors of every cell the hop crosses. Under Snapshot a move is only buffered; the buffer
is flushed to the cell's snapshot update actor on every timer tick and becomes visible with
the next snapshot version.
"""

from __future__ import annotations

import inspect
from collections import OrderedDict, defaultdict
from collections.abc import Callable
from dataclasses import dataclass
from typing import Any

from apify import Actor

from src.actor_kernel import ActorBase, Kernel, TimerHandle
from src.config import DatabaseConfig
from src.errors import MovingActorDbError, OutOfBounds, SnapshotUnstable
from src.geometry import convex_hull, eval_itinerary, fence_at
from src.grid import cell_of, cells_of_envelope, cells_of_segment
from src.models import (
    ActorId,
    CellId,
    ConvexPolygon,
    Envelope,
    FlushSentPayload,
    Itinerary,
    LookupResult,
    MoveDonePayload,
    MoveUpdate,
    Point,
    Predicate,
    QueryEndPayload,
    QueryHit,
    QueryStartPayload,
    ReactionEvent,
    ReactionFiredPayload,
    Segment,
    Semantics,
    SensingOffPayload,
    SensingOnPayload,
    SpawnedPayload,
)
from src.snapshot_protocol import sua_id
from src.spatial_actors import index_id, monitor_id
from src.trace import Tracer

ReactionCallback = Callable[[ReactionEvent], Any]


@dataclass
class SensingSpec:
    predicate: Predicate
    reaction: ReactionCallback | None = None


class MovingActor(ActorBase):
    """A moving object with a location, a fence and optional reactive sensing."""

    def __init__(self, actor_id: ActorId, kernel: Kernel, config: DatabaseConfig, tracer: Tracer):
        super().__init__(actor_id, kernel)
        self.config = config
        self.grid = config.grid
        self.tracer = tracer
        self.loc: Point | None = None
        self.fence: ConvexPolygon | None = None
        self.sensing: SensingSpec | None = None
        self.subscriptions: set[CellId] = set()
        self.last_t_u = 0
        self.reaction_count = 0

        # Freshness deduplication by (mover, t_u)
        self._recent: OrderedDict[tuple[ActorId, int], None] = OrderedDict()

        # Snapshot state
        self.buffer: Itinerary | None = None
        self.acc_fence: ConvexPolygon | None = None
        self.timer: TimerHandle | None = None
        self.last_closed_epoch = 0
        self.closed_fences: dict[int, ConvexPolygon] = {}
        self._closed_cells: dict[int, set[CellId]] = {}
        self._pending: defaultdict[int, list[MoveUpdate]] = defaultdict(list)
        self._seen_by_epoch: defaultdict[int, set[ActorId]] = defaultdict(set)

    @property
    def snapshot_mode(self) -> bool:
        return self.config.semantics is Semantics.SNAP

    def _fence_at(self, pt: Point) -> ConvexPolygon:
        return fence_at(pt, self.config.fence_side_m, self.config.fence_offset)

    def _require_spawned(self) -> Point:
        if self.loc is None:
            raise MovingActorDbError(f"{self.id} was never spawned")
        return self.loc

    # Subscriptions

    def _fence_cells(self, fence: ConvexPolygon) -> set[CellId]:
        try:
            return cells_of_envelope(self.grid, fence.bounds())
        except OutOfBounds:
            return set()

    def _wanted_cells(self) -> set[CellId]:
        if self.sensing is None or self.fence is None:
            return set()
        if not self.snapshot_mode:
            return self._fence_cells(self.fence)
        wanted = self._fence_cells(self.acc_fence or self.fence)
        for cells in self._closed_cells.values():
            wanted |= cells
        return wanted

    def _sync_subscriptions(self) -> None:
        wanted = self._wanted_cells()
        for cell in self.subscriptions - wanted:
            self.kernel.unsubscribe(cell, self.id)
        for cell in wanted - self.subscriptions:
            self.kernel.subscribe(cell, self.id)
        self.subscriptions = wanted

    # Lifecycle

    async def handle_spawn(
        self,
        location: Point,
        first_epoch: int | None = None,
        fence_offset: Point | None = None,
    ) -> int:
        """Place the actor at its initial location; returns the spawn time."""
        cell = cell_of(self.grid, location)
        if fence_offset is not None:
            self.config = self.config.model_copy(update={"fence_offset": fence_offset})
        self.loc = location
        self.fence = self._fence_at(location)

        if self.snapshot_mode:
            if first_epoch is None:
                first_epoch = self.kernel.clock.next_tick(
                    self.config.snapshot_interval_ns, self.config.snapshot_interval_ns // 2
                )
            self.kernel.tell(sua_id(cell), "register", self.id, location, first_epoch)
            t = self.kernel.clock.now()
            self.buffer = Itinerary.single(location, t)
            self.timer = self.kernel.register_timer(
                self.id,
                self.config.snapshot_interval_ns,
                jitter_ns=self.config.timer_jitter_ns,
                first_tick=first_epoch,
            )
            self.last_closed_epoch = first_epoch - 1
        else:
            await self.kernel.ask(index_id(cell), "update", self.id, None, location)
            t = self.kernel.clock.now()

        self.last_t_u = t
        self.tracer.record(
            self.id,
            SpawnedPayload(
                location=location,
                fence_side=self.config.fence_side_m,
                fence_offset=self.config.fence_offset,
            ),
            time=t,
        )
        return t

    async def handle_location(self) -> Point | None:
        return self.loc

    # Move

    async def handle_move(self, dest: Point, t_req: int | None = None) -> int:
        """Move to `dest` and return the completion time t_u."""
        t_start = self.kernel.clock.now()
        t_req = t_start if t_req is None else t_req
        source = self._require_spawned()
        new_cell = cell_of(self.grid, dest)
        old_cell = cell_of(self.grid, source)

        self.loc = dest
        self.fence = self._fence_at(dest)

        if self.snapshot_mode:
            t_u = self.kernel.clock.now()
            assert self.buffer is not None
            self.buffer = self.buffer.extended(dest, t_u)
            if self.sensing is not None:
                self.acc_fence = convex_hull([*(self.acc_fence or self.fence).vertices, *self.fence.vertices])
                self._sync_subscriptions()
        else:
            if self.sensing is not None:
                self._sync_subscriptions()
            if old_cell == new_cell:
                await self.kernel.ask(index_id(new_cell), "update", self.id, source, dest)
            else:
                await self.kernel.wait_for(
                    self.kernel.send(index_id(old_cell), "update", self.id, source, None),
                    self.kernel.send(index_id(new_cell), "update", self.id, source, dest),
                )
            t_u = self.kernel.clock.now()

        self.tracer.record(
            self.id,
            MoveDonePayload(source=source, dest=dest, t_req=t_req, t_start=t_start),
            time=t_u,
        )

        if not self.snapshot_mode:
            update = MoveUpdate(
                actor=self.id,
                iti=Itinerary(points=(source, dest), timestamps=(self.last_t_u, t_u)),
                t_u=t_u,
            )
            for cell in sorted(cells_of_segment(self.grid, Segment(start=source, end=dest))):
                self.kernel.tell(monitor_id(cell), "relay", update)

        self.last_t_u = t_u
        return t_u

    # Range query

    async def _lookup(self, cells: list[CellId], window: Envelope) -> list[LookupResult]:
        return await self.kernel.wait_for(
            *(self.kernel.send(index_id(cell), "lookup", window) for cell in cells)
        )

    async def handle_find_actors(self, window: Envelope) -> list[tuple[ActorId, Point]]:
        """Actors inside `window`; under Snapshot all of them come from one version."""
        cells = sorted(cells_of_envelope(self.grid, window))
        t_s = self.kernel.clock.now()
        query_id = t_s
        self.tracer.record(self.id, QueryStartPayload(query_id=query_id, window=window), time=t_s)

        results = await self._lookup(cells, window)
        retries = 0
        if self.snapshot_mode:
            while len({r.version for r in results}) > 1:
                if retries >= self.config.query_max_retries:
                    raise SnapshotUnstable(
                        f"query {query_id} saw versions {sorted({r.version for r in results})} "
                        f"after {retries} retries"
                    )
                retries += 1
                Actor.log.debug(f"{self.id}: mixed snapshot versions, retry {retries}")
                await self.kernel.pause(self.config.snapshot_interval_ms / 10_000)
                results = await self._lookup(cells, window)

        hits = [(actor, pt) for r in results for actor, pt in r.entries]
        versions = tuple(r.version for r in results)
        self.tracer.record(
            self.id,
            QueryEndPayload(
                query_id=query_id,
                version=versions[0] if self.snapshot_mode and versions else None,
                cell_versions=versions,
                retries=retries,
                results=tuple(QueryHit(actor=a, location=p) for a, p in hits),
            ),
        )
        return hits

    # Reactive sensing

    async def handle_start_reactive_sensing(
        self, predicate: Predicate, reaction: ReactionCallback | None = None
    ) -> None:
        self._require_spawned()
        was_sensing = self.sensing is not None
        self.sensing = SensingSpec(predicate=predicate, reaction=reaction)
        if self.snapshot_mode and not was_sensing:
            self.acc_fence = self.fence
        self.tracer.record(self.id, SensingOnPayload(predicate=predicate))
        self._sync_subscriptions()

    async def handle_end_reactive_sensing(self) -> None:
        if self.sensing is None:
            return
        self.sensing = None
        self._sync_subscriptions()
        self.acc_fence = None
        self.closed_fences.clear()
        self._closed_cells.clear()
        self._pending.clear()
        self._seen_by_epoch.clear()
        self.tracer.record(self.id, SensingOffPayload())

    def _is_duplicate(self, update: MoveUpdate) -> bool:
        if update.epoch is not None:
            seen = self._seen_by_epoch[update.epoch]
            if update.actor in seen:
                return True
            seen.add(update.actor)
            return False
        key = update.dedup_key
        if key in self._recent:
            return True
        self._recent[key] = None
        if len(self._recent) > self.config.dedup_window:
            self._recent.popitem(last=False)
        return False

    async def handle_stream_update(self, update: MoveUpdate) -> ReactionEvent | None:
        """React to another actor's movement if it satisfies the sensing predicate."""
        if self.sensing is None or update.actor == self.id or self._is_duplicate(update):
            return None
        if not self.snapshot_mode:
            assert self.fence is not None
            return await self._evaluate(update, self.fence)

        assert update.epoch is not None
        if update.epoch in self.closed_fences:
            return await self._evaluate(update, self.closed_fences[update.epoch])
        if update.epoch > self.last_closed_epoch:
            self._pending[update.epoch].append(update)
        else:
            Actor.log.debug(f"{self.id}: dropped update of {update.actor} for expired epoch {update.epoch}")
        return None

    async def _evaluate(self, update: MoveUpdate, fence: ConvexPolygon) -> ReactionEvent | None:
        assert self.sensing is not None
        if not eval_itinerary(self.sensing.predicate, update.iti, fence):
            return None
        t = self.kernel.clock.now()
        event = ReactionEvent(
            sensor=self.id,
            mover=update.actor,
            mover_t_u=update.t_u,
            trigger_time=t,
            epoch=update.epoch,
        )
        self.tracer.record(
            self.id,
            ReactionFiredPayload(mover=update.actor, mover_t_u=update.t_u, epoch=update.epoch),
            time=t,
        )
        self.reaction_count += 1
        if self.sensing.reaction is not None:
            result = self.sensing.reaction(event)
            if inspect.isawaitable(result):
                await result
        return event

    # Snapshot flush

    async def handle_timer_fire(self, tick: int) -> None:
        await self.flush_buffer(tick)

    async def flush_buffer(self, epoch: int) -> None:
        """Send the buffered itinerary to the SUA of its first location's cell."""
        assert self.buffer is not None and self.fence is not None
        iti = self.buffer
        self.tracer.record(
            self.id,
            FlushSentPayload(epoch=epoch, itinerary=iti, skew_ns=self.kernel.clock.skew_of(self.shard)),
        )
        self.kernel.tell(sua_id(cell_of(self.grid, iti.first)), "flush", self.id, iti, epoch)
        self.buffer = Itinerary.single(iti.last, iti.timestamps[-1])
        self.last_closed_epoch = epoch

        if self.sensing is None:
            return
        closed = self.acc_fence or self.fence
        self.closed_fences[epoch] = closed
        self._closed_cells[epoch] = self._fence_cells(closed)
        self.acc_fence = self.fence

        oldest_kept = epoch - self.config.fence_retention_epochs + 1
        for stale in [e for e in self.closed_fences if e < oldest_kept]:
            del self.closed_fences[stale]
            del self._closed_cells[stale]
        for stale in [e for e in self._seen_by_epoch if e < oldest_kept]:
            del self._seen_by_epoch[stale]
        for skipped in [e for e in self._pending if e < epoch]:
            del self._pending[skipped]
        self._sync_subscriptions()

        for update in self._pending.pop(epoch, []):
            await self._evaluate(update, closed)
