"""Application-facing facade: one kernel wired with the spatial, moving and snapshot actors."""

from __future__ import annotations

import asyncio
from collections import Counter
from types import TracebackType

from apify import Actor

from src.actor_kernel import ClockSource, Kernel
from src.config import DatabaseConfig
from src.grid import build_placement, build_random_placement, cell_of
from src.models import (
    CONTROLLER_ID,
    ActorId,
    ActorKind,
    CellId,
    Envelope,
    Placement,
    PlacementMap,
    Point,
    Predicate,
    Semantics,
    SnapshotEpoch,
)
from src.moving_actor import MovingActor, ReactionCallback
from src.snapshot_protocol import SnapshotController, SnapshotUpdateActor, sua_id
from src.spatial_actors import IndexingActor, MonitoringActor, index_id
from src.trace import Tracer


class MovingActorDatabase:
    """Spawns moving actors and forwards the moving actor API to them.

    Example:
        >>> async with MovingActorDatabase(DatabaseConfig(grid=grid)) as db:
        ...     a = await db.spawn(1, Point(x=500, y=500))
        ...     await db.move(a, Point(x=700, y=500))
    """

    def __init__(
        self,
        config: DatabaseConfig,
        *,
        placement: PlacementMap | None = None,
        tracer: Tracer | None = None,
    ):
        self.config = config
        self.grid = config.grid
        if placement is None:
            if config.placement is Placement.RANDOM:
                placement = build_random_placement(self.grid, config.num_shards, config.seed)
            else:
                placement = build_placement(self.grid, config.num_shards)
        self.placement = placement
        self.clock = ClockSource(config.num_shards, config.max_clock_skew_ns, config.seed)
        self.tracer = tracer or Tracer(self.clock, config.num_shards, enabled=config.trace_enabled)
        self._home_cell: dict[int, CellId] = {}

        self.kernel = Kernel(
            num_shards=config.num_shards,
            clock=self.clock,
            shard_resolver=self._shard_of,
            workers_per_shard=config.workers_per_shard,
            cross_shard_latency_ns=config.cross_shard_latency_ns,
            turn_cost_ns=config.turn_cost_ns,
            remote_cost_ns=config.remote_cost_ns,
            reply_timeout_s=config.reply_timeout_s,
            seed=config.seed,
        )
        self.kernel.register_factory(
            ActorKind.MOVING, lambda aid, k: MovingActor(aid, k, self.config, self.tracer)
        )
        self.kernel.register_factory(ActorKind.INDEX, lambda aid, k: IndexingActor(aid, k, self.grid))
        self.kernel.register_factory(ActorKind.MONITOR, lambda aid, k: MonitoringActor(aid, k, self.tracer))
        self.kernel.register_factory(
            ActorKind.SNAPSHOT_UPDATE, lambda aid, k: SnapshotUpdateActor(aid, k, self.grid)
        )
        self.kernel.register_factory(
            ActorKind.SNAPSHOT_CONTROLLER,
            lambda aid, k: SnapshotController(
                aid,
                k,
                self.grid,
                self.tracer,
                interval_ns=config.snapshot_interval_ns,
                slack_ns=config.max_clock_skew_ns + config.timer_jitter_ns + config.cross_shard_latency_ns,
            ),
        )
        Actor.log.info(
            f"Database ready: {config.semantics.value} semantics, {self.grid.num_cells} cells "
            f"on {config.num_shards} shard(s)"
        )

    def _shard_of(self, actor_id: ActorId) -> int:
        if actor_id.kind is ActorKind.SNAPSHOT_CONTROLLER:
            return 0
        if actor_id.kind is ActorKind.MOVING:
            cell = self._home_cell.get(actor_id.key)
            return self.placement.shard(cell) if cell is not None else 0
        return self.placement.shard(actor_id.key)

    @property
    def semantics(self) -> Semantics:
        return self.config.semantics

    async def __aenter__(self) -> MovingActorDatabase:
        return self

    async def __aexit__(
        self,
        exc_type: type[BaseException] | None,
        exc: BaseException | None,
        tb: TracebackType | None,
    ) -> None:
        await self.close()

    # Moving actor API

    async def spawn(self, key: int, location: Point, *, fence_offset: Point | None = None) -> ActorId:
        """Create moving actor `key` at `location`, homed on the shard of that cell."""
        actor = ActorId.moving(key)
        if key in self._home_cell:
            raise ValueError(f"{actor} already exists")
        self._home_cell[key] = cell_of(self.grid, location)
        await self.kernel.ask(actor, "spawn", location, None, fence_offset)
        return actor

    async def move(self, actor: ActorId, dest: Point) -> int:
        return await self.kernel.ask(actor, "move", dest, self.clock.now())

    async def find_actors(self, actor: ActorId, window: Envelope) -> list[tuple[ActorId, Point]]:
        return await self.kernel.ask(actor, "find_actors", window)

    async def start_reactive_sensing(
        self, actor: ActorId, predicate: Predicate, reaction: ReactionCallback | None = None
    ) -> None:
        await self.kernel.ask(actor, "start_reactive_sensing", predicate, reaction)

    async def end_reactive_sensing(self, actor: ActorId) -> None:
        await self.kernel.ask(actor, "end_reactive_sensing")

    async def location(self, actor: ActorId) -> Point | None:
        return await self.kernel.ask(actor, "location")

    # Inspection

    async def quiesce(self, timeout_s: float | None = None) -> None:
        await self.kernel.quiesce(timeout_s)

    async def index_census(self) -> dict[ActorId, Point]:
        """Every indexed actor with its indexed location, across all cells."""
        census: dict[ActorId, Point] = {}
        for _version, entries in await self._census_replies():
            census.update(entries)
        return census

    async def index_entry_counts(self) -> Counter[ActorId]:
        """How many cells index each actor; 1 everywhere once quiesced."""
        counts: Counter[ActorId] = Counter()
        for _version, entries in await self._census_replies():
            counts.update(entries.keys())
        return counts

    async def index_versions(self) -> list[int]:
        return [version for version, _entries in await self._census_replies()]

    async def _census_replies(self) -> list[tuple[int, dict[ActorId, Point]]]:
        return await self.kernel.wait_for(
            *(self.kernel.send(index_id(cell), "census") for cell in range(self.grid.num_cells))
        )

    async def resident_census(self) -> dict[ActorId, CellId]:
        """Cell each actor is a snapshot resident of."""
        replies = await self.kernel.wait_for(
            *(self.kernel.send(sua_id(cell), "residents") for cell in range(self.grid.num_cells))
        )
        census: dict[ActorId, CellId] = {}
        for cell, residents in enumerate(replies):
            for actor in residents:
                census[actor] = cell
        return census

    async def snapshot_epochs(self) -> list[SnapshotEpoch]:
        return await self.kernel.ask(CONTROLLER_ID, "epochs")

    async def wait_for_snapshot(self, epoch: int, timeout_s: float = 10.0) -> None:
        """Poll until snapshot `epoch` has been applied everywhere."""
        async def applied() -> None:
            while True:
                epochs = await self.snapshot_epochs()
                if any(e.n >= epoch and e.t_j is not None for e in epochs):
                    return
                await asyncio.sleep(self.config.snapshot_interval_ms / 10_000)

        await asyncio.wait_for(applied(), timeout_s)

    async def close(self, drain_timeout_s: float = 5.0) -> None:
        """Stop every timer, let in-flight work drain and stop the kernel."""
        if self.kernel.stopped:
            return
        self.kernel.cancel_timers()
        try:
            await self.kernel.quiesce(drain_timeout_s)
        except asyncio.TimeoutError:
            Actor.log.warning(f"Kernel did not drain within {drain_timeout_s}s, stopping anyway")
        await self.kernel.stop()
