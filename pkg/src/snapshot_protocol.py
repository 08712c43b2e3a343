"""Snapshot rounds: per-cell Snapshot Update Actors (SUAs) and the Snapshot Controller.

One round per epoch n:
  1. Every moving actor flushes its buffered itinerary for epoch n to the SUA of the cell
     its buffer starts in.
  2. Once all of its residents reported, an SUA relays the itineraries of the actors that
     moved to the monitors of the cells they span and announces to the controller which cells its actors ended in.
  3. When every active cell announced, the controller tells each cell which SUAs will send
     it arriving actors.
  4. SUAs exchange the final locations of crossing actors, apply the batch to their index
     as version n and report back; the round completes when all cells applied.
"""

from __future__ import annotations

from collections import defaultdict
from collections.abc import Mapping
from enum import Enum

from apify import Actor

from src.actor_kernel import ActorBase, Kernel
from src.errors import DuplicateFlush, StaleRound
from src.grid import cell_of, cells_of_segment
from src.models import (
    CONTROLLER_ID,
    ActorId,
    ActorKind,
    CellId,
    GridConfig,
    Itinerary,
    MoveUpdate,
    Point,
    SnapshotAppliedPayload,
    SnapshotEpoch,
)
from src.spatial_actors import IndexEntry, index_id, monitor_id
from src.trace import Tracer


def sua_id(cell: CellId) -> ActorId:
    return ActorId(kind=ActorKind.SNAPSHOT_UPDATE, key=cell)


class SuaPhase(str, Enum):
    COLLECTING = "collecting"
    EXCHANGING = "exchanging"
    APPLYING = "applying"
    IDLE = "idle"


def controller_round(
    announcements: Mapping[CellId, set[CellId]], num_cells: int
) -> dict[CellId, set[CellId]]:
    """Invert the announcement relation: for every cell, the cells that will send to it."""
    expected: dict[CellId, set[CellId]] = {cell: set() for cell in range(num_cells)}
    for source, destinations in announcements.items():
        for destination in destinations:
            expected[destination].add(source)
    return expected


def itinerary_cells(grid: GridConfig, iti: Itinerary) -> set[CellId]:
    cells: set[CellId] = set()
    for hop in iti.hops():
        cells |= cells_of_segment(grid, hop)
    return cells


class SnapshotUpdateActor(ActorBase):
    """Collects the flushes of a cell's residents and applies them as a new index version."""

    def __init__(self, actor_id: ActorId, kernel: Kernel, grid: GridConfig):
        super().__init__(actor_id, kernel)
        self.cell: CellId = actor_id.key
        self.grid = grid
        self.phase = SuaPhase.IDLE
        self.epoch = 0  # last applied
        self.announced = 0
        self.residents: dict[ActorId, int] = {}  # actor -> first epoch it reports for
        self.received: defaultdict[int, dict[ActorId, Itinerary]] = defaultdict(dict)
        self.outbound: dict[CellId, list[tuple[ActorId, Point]]] = {}
        self._closing: dict[int, dict[ActorId, Itinerary]] = {}
        self._senders: dict[int, set[CellId]] = {}
        self._inbound: defaultdict[int, dict[CellId, list[tuple[ActorId, Point]]]] = defaultdict(dict)

    def expected_residents(self, epoch: int) -> set[ActorId]:
        return {actor for actor, first in self.residents.items() if first <= epoch}

    async def handle_register(self, actor: ActorId, location: Point, first_epoch: int) -> None:
        """Make a newly spawned actor a resident from `first_epoch` on."""
        if not self.expected_residents(first_epoch):
            self.kernel.tell(CONTROLLER_ID, "activate", self.cell, first_epoch)
        self.residents[actor] = first_epoch

    async def handle_residents(self) -> dict[ActorId, int]:
        return dict(self.residents)

    async def handle_flush(self, actor: ActorId, iti: Itinerary, epoch: int) -> None:
        home = cell_of(self.grid, iti.first)
        if home != self.cell:
            Actor.log.warning(f"SUA {self.cell}: forwarding flush of {actor} to cell {home}")
            self.kernel.tell(sua_id(home), "flush", actor, iti, epoch)
            return
        if epoch <= self.announced:
            Actor.log.warning(f"SUA {self.cell}: late flush of {actor} for closed epoch {epoch}")
            return
        batch = self.received[epoch]
        if actor in batch:
            raise DuplicateFlush(f"{actor} already flushed epoch {epoch} to cell {self.cell}")
        batch[actor] = iti
        if actor not in self.residents:
            self.residents[actor] = epoch
        await self._try_close(epoch)

    async def _try_close(self, epoch: int) -> None:
        if epoch != self.epoch + 1 or self.phase not in (SuaPhase.IDLE, SuaPhase.COLLECTING):
            return
        batch = self.received.get(epoch, {})
        expected = self.expected_residents(epoch)
        if not batch and not expected:
            return
        self.phase = SuaPhase.COLLECTING
        if not expected <= batch.keys():
            return

        self._closing[epoch] = self.received.pop(epoch, {})
        destinations: set[CellId] = set()
        for actor, iti in self._closing[epoch].items():
            if not iti.stationary:
                update = MoveUpdate(actor=actor, iti=iti, t_u=iti.timestamps[-1], epoch=epoch)
                for cell in sorted(itinerary_cells(self.grid, iti)):
                    self.kernel.tell(monitor_id(cell), "relay", update)
            destinations.add(cell_of(self.grid, iti.last))
        destinations.discard(self.cell)

        self.announced = epoch
        self.phase = SuaPhase.EXCHANGING
        self.kernel.tell(CONTROLLER_ID, "announce", self.cell, epoch, sorted(destinations))

    async def handle_expect(self, epoch: int, senders: list[CellId]) -> None:
        """Controller reply: send crossing actors out and wait for the listed senders."""
        if epoch != self.epoch + 1:
            raise StaleRound(f"SUA {self.cell} at epoch {self.epoch} got the reply for {epoch}")
        batch = self._closing.get(epoch)
        if batch is None:
            batch = self._closing[epoch] = self.received.pop(epoch, {})
            if batch:
                Actor.log.warning(
                    f"SUA {self.cell}: {len(batch)} flush(es) for epoch {epoch} arrived outside the round"
                )
        self.announced = max(self.announced, epoch)
        self.phase = SuaPhase.EXCHANGING

        self.outbound = {}
        for actor, iti in batch.items():
            destination = cell_of(self.grid, iti.last)
            if destination != self.cell:
                self.outbound.setdefault(destination, []).append((actor, iti.last))
        for destination, entries in sorted(self.outbound.items()):
            self.kernel.tell(sua_id(destination), "inbound", epoch, self.cell, entries)

        self._senders[epoch] = set(senders)
        await self._try_apply(epoch)

    async def handle_inbound(
        self, epoch: int, source: CellId, entries: list[tuple[ActorId, Point]]
    ) -> None:
        self._inbound[epoch][source] = entries
        await self._try_apply(epoch)

    async def _try_apply(self, epoch: int) -> None:
        senders = self._senders.get(epoch)
        arrived = self._inbound.get(epoch, {})
        if senders is None or not senders <= arrived.keys():
            return

        self.phase = SuaPhase.APPLYING
        updates: list[IndexEntry] = []
        for actor, iti in self._closing.pop(epoch, {}).items():
            if cell_of(self.grid, iti.last) == self.cell:
                updates.append((actor, iti.last))
            else:
                updates.append((actor, None))
                self.residents.pop(actor, None)
        for source in sorted(arrived):
            for actor, pt in arrived[source]:
                updates.append((actor, pt))
                self.residents[actor] = min(self.residents.get(actor, epoch + 1), epoch + 1)
        self._inbound.pop(epoch, None)
        self._senders.pop(epoch, None)

        await self.kernel.ask(index_id(self.cell), "apply_batch", updates, epoch)

        self.epoch = epoch
        self.outbound = {}
        self.phase = SuaPhase.IDLE
        active = bool(self.expected_residents(epoch + 1))
        self.kernel.tell(CONTROLLER_ID, "applied", self.cell, epoch, active)
        await self._try_close(epoch + 1)


class SnapshotController(ActorBase):
    """Singleton coordinating the snapshot rounds of all cells."""

    def __init__(
        self,
        actor_id: ActorId,
        kernel: Kernel,
        grid: GridConfig,
        tracer: Tracer,
        interval_ns: int,
        slack_ns: int = 0,
    ):
        super().__init__(actor_id, kernel)
        self.num_cells = grid.num_cells
        self.tracer = tracer
        self.interval_ns = interval_ns
        self.slack_ns = slack_ns
        self._wakeup_for: int | None = None
        self.round = 1
        self.active_cells: set[CellId] = set()
        self.joining: dict[CellId, int] = {}
        self.announcements: defaultdict[int, dict[CellId, set[CellId]]] = defaultdict(dict)
        self.epochs: dict[int, SnapshotEpoch] = {}
        self._applied: set[CellId] = set()
        self._replied = False

    def barrier(self, epoch: int) -> set[CellId]:
        """Cells whose announcement the round waits for."""
        joining = {cell for cell, first in self.joining.items() if first <= epoch}
        return self.active_cells | joining

    async def handle_activate(self, cell: CellId, first_epoch: int) -> None:
        self.joining[cell] = min(self.joining.get(cell, first_epoch), first_epoch)
        self._maybe_reply()

    async def handle_announce(self, cell: CellId, epoch: int, destinations: list[CellId]) -> None:
        if epoch < self.round or (epoch == self.round and self._replied):
            raise StaleRound(f"cell {cell} announced epoch {epoch} during round {self.round}")
        self.announcements[epoch][cell] = set(destinations)
        if epoch not in self.epochs:
            self.epochs[epoch] = SnapshotEpoch(n=epoch, t_i=self.kernel.clock.now())
        self._maybe_reply()

    async def handle_wakeup(self, epoch: int) -> None:
        if epoch == self._wakeup_for:
            self._wakeup_for = None
        self._maybe_reply()

    def _empty_round_due(self) -> bool:
        """An epoch nobody flushes for still has to be applied before later cells can join.

        It runs once its tick has passed everywhere; until then a wake-up is scheduled.
        """
        if not self.joining:
            return False
        due = self.kernel.clock.tick_time(self.round, self.interval_ns) + self.slack_ns
        wait_ns = due - self.kernel.clock.now()
        if wait_ns <= 0:
            return True
        if self._wakeup_for != self.round:
            self._wakeup_for = self.round
            self.kernel.tell_later(wait_ns / 1e9, self.id, "wakeup", self.round)
        return False

    def _maybe_reply(self) -> None:
        if self._replied:
            return
        announced = self.announcements.get(self.round, {})
        barrier = self.barrier(self.round)
        if barrier:
            if not barrier <= announced.keys():
                return
        elif not self._empty_round_due():
            return
        self._replied = True
        if self.round not in self.epochs:
            self.epochs[self.round] = SnapshotEpoch(n=self.round, t_i=self.kernel.clock.now())
        for cell, senders in controller_round(announced, self.num_cells).items():
            self.kernel.tell(sua_id(cell), "expect", self.round, sorted(senders))

    async def handle_applied(self, cell: CellId, epoch: int, active: bool) -> None:
        if epoch != self.round:
            raise StaleRound(f"cell {cell} applied epoch {epoch} during round {self.round}")
        self._applied.add(cell)
        if active:
            self.active_cells.add(cell)
        else:
            self.active_cells.discard(cell)
        if self.joining.get(cell, epoch + 2) <= epoch + 1:
            del self.joining[cell]
        if len(self._applied) < self.num_cells:
            return

        t_j = self.kernel.clock.now()
        self.epochs[epoch].t_j = t_j
        self.tracer.record(self.id, SnapshotAppliedPayload(epoch=epoch), time=t_j)
        Actor.log.debug(f"Snapshot {epoch} applied, {len(self.active_cells)} active cells")
        self.announcements.pop(epoch, None)
        self._applied.clear()
        self._replied = False
        self.round += 1
        self._maybe_reply()

    async def handle_epochs(self) -> list[SnapshotEpoch]:
        return [self.epochs[n] for n in sorted(self.epochs)]
