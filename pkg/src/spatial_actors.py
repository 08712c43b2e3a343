"""Per-cell Indexing Actors (versioned R-trees) and Monitoring Actors (stream relays)."""

from __future__ import annotations

from rtree import index

from src.actor_kernel import ActorBase, Kernel
from src.errors import VersionGap
from src.geometry import envelope_contains
from src.models import (
    ActorId,
    ActorKind,
    CellId,
    Envelope,
    GridConfig,
    LookupResult,
    MoveUpdate,
    Point,
    RelayedPayload,
)
from src.trace import Tracer

IndexEntry = tuple[ActorId, Point | None]


def index_id(cell: CellId) -> ActorId:
    return ActorId(kind=ActorKind.INDEX, key=cell)


def monitor_id(cell: CellId) -> ActorId:
    return ActorId(kind=ActorKind.MONITOR, key=cell)


def _rtree_properties() -> index.Property:
    p = index.Property()
    p.dimension = 2
    p.leaf_capacity = 16
    p.index_capacity = 16
    p.variant = index.RT_Quadratic
    return p


class VersionedIndex:
    """R-tree of actor locations tagged with a snapshot version.

    Holds at most one entry per actor. Moving actor keys double as R-tree ids.
    """

    def __init__(self) -> None:
        self.version = 0
        self._points: dict[ActorId, Point] = {}
        self._by_key: dict[int, ActorId] = {}
        self._rtree = index.Index(properties=_rtree_properties())

    def __len__(self) -> int:
        return len(self._points)

    def upsert(self, actor: ActorId, pt: Point) -> None:
        self.remove(actor)
        self._points[actor] = pt
        self._by_key[actor.key] = actor
        self._rtree.insert(actor.key, (pt.x, pt.y, pt.x, pt.y))

    def remove(self, actor: ActorId) -> None:
        old = self._points.pop(actor, None)
        if old is not None:
            del self._by_key[actor.key]
            self._rtree.delete(actor.key, (old.x, old.y, old.x, old.y))

    def search(self, window: Envelope) -> list[tuple[ActorId, Point]]:
        hits = []
        for key in self._rtree.intersection(window.as_bounds()):
            actor = self._by_key[key]
            pt = self._points[actor]
            if envelope_contains(window, pt):
                hits.append((actor, pt))
        hits.sort(key=lambda hit: hit[0].key)
        return hits

    def entries(self) -> dict[ActorId, Point]:
        return dict(self._points)


class IndexingActor(ActorBase):
    """Indexes the locations of the moving actors inside one cell."""

    def __init__(self, actor_id: ActorId, kernel: Kernel, grid: GridConfig):
        super().__init__(actor_id, kernel)
        self.cell: CellId = actor_id.key
        self.extent = grid.cell_extent(self.cell)
        self.index = VersionedIndex()

    @property
    def version(self) -> int:
        return self.index.version

    async def handle_update(self, actor: ActorId, old: Point | None, new: Point | None) -> None:
        """Insert or replace the actor's entry; `new=None` is a departure to another cell."""
        if new is None:
            self.index.remove(actor)
        else:
            self.index.upsert(actor, new)

    async def handle_lookup(self, window: Envelope) -> LookupResult:
        clipped = window.intersection(self.extent)
        entries = self.index.search(clipped) if clipped is not None else []
        return LookupResult(cell=self.cell, entries=tuple(entries), version=self.index.version)

    async def handle_apply_batch(self, updates: list[IndexEntry], new_version: int) -> int:
        """Apply one snapshot's worth of changes in a single turn and bump the version."""
        if new_version != self.index.version + 1:
            raise VersionGap(self.cell, self.index.version, new_version)
        for actor, pt in updates:
            if pt is None:
                self.index.remove(actor)
            else:
                self.index.upsert(actor, pt)
        self.index.version = new_version
        return new_version

    async def handle_census(self) -> tuple[int, dict[ActorId, Point]]:
        return self.index.version, self.index.entries()


class MonitoringActor(ActorBase):
    """Relays movement updates crossing its cell to the cell's stream subscribers."""

    def __init__(self, actor_id: ActorId, kernel: Kernel, tracer: Tracer):
        super().__init__(actor_id, kernel)
        self.cell: CellId = actor_id.key
        self.tracer = tracer
        self.relayed = 0

    async def handle_relay(self, update: MoveUpdate) -> int:
        delivered = self.kernel.publish(self.cell, update)
        self.relayed += 1
        self.tracer.record(
            self.id,
            RelayedPayload(mover=update.actor, mover_t_u=update.t_u, epoch=update.epoch),
        )
        return delivered
