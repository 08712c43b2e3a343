"""Value types shared by the geometry, the actors, the snapshot protocol and the trace oracle."""

from __future__ import annotations

import math
from enum import Enum
from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

CellId = int


class Predicate(str, Enum):
    """Spatial predicate evaluated between an itinerary and a fence"""
    CROSS = "cross"      # enters or leaves the fence
    COVER = "cover"      # fully inside or on the fence
    OVERLAP = "overlap"  # any contact, boundary included


class Semantics(str, Enum):
    """Concurrency semantics the database runs under"""
    FRESH = "fresh"
    SNAP = "snap"


class ActorKind(str, Enum):
    """Kinds of actors hosted by the kernel"""
    MOVING = "moving"
    INDEX = "index"
    MONITOR = "monitor"
    SNAPSHOT_UPDATE = "sua"
    SNAPSHOT_CONTROLLER = "controller"


class MovementModel(str, Enum):
    UNIFORM = "uniform"
    GAUSSIAN = "gaussian"
    ROADNET = "roadnet"


class Placement(str, Enum):
    """How grid cells are assigned to shards"""
    SPATIAL = "spatial"  # KD split over actor density
    RANDOM = "random"


# Geometry

class Point(BaseModel):
    """A planar location in projected meters."""

    model_config = ConfigDict(frozen=True)

    x: float = Field(..., allow_inf_nan=False, description="Easting in meters")
    y: float = Field(..., allow_inf_nan=False, description="Northing in meters")

    @classmethod
    def xy(cls, x: float, y: float) -> Point:
        return cls(x=x, y=y)

    def __add__(self, other: Point) -> Point:
        return Point(x=self.x + other.x, y=self.y + other.y)

    def __sub__(self, other: Point) -> Point:
        return Point(x=self.x - other.x, y=self.y - other.y)

    def as_tuple(self) -> tuple[float, float]:
        return (self.x, self.y)

    def distance(self, other: Point) -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


class Segment(BaseModel):
    """One hop of an itinerary; zero length is allowed"""

    model_config = ConfigDict(frozen=True)

    start: Point
    end: Point

    @property
    def is_degenerate(self) -> bool:
        return self.start == self.end

    def translated(self, v: Point) -> Segment:
        return Segment(start=self.start + v, end=self.end + v)


class Envelope(BaseModel):
    """Axis-aligned rectangle, closed on all four sides."""

    model_config = ConfigDict(frozen=True)

    min: Point = Field(..., description="Lower-left corner")
    max: Point = Field(..., description="Upper-right corner")

    @model_validator(mode="after")
    def _check_corners(self) -> Envelope:
        if self.min.x > self.max.x or self.min.y > self.max.y:
            raise ValueError(f"envelope min {self.min} exceeds max {self.max}")
        return self

    @classmethod
    def of(cls, min_x: float, min_y: float, max_x: float, max_y: float) -> Envelope:
        return cls(min=Point(x=min_x, y=min_y), max=Point(x=max_x, y=max_y))

    @classmethod
    def around(cls, center: Point, side: float) -> Envelope:
        half = side / 2.0
        return cls.of(center.x - half, center.y - half, center.x + half, center.y + half)

    @property
    def width(self) -> float:
        return self.max.x - self.min.x

    @property
    def height(self) -> float:
        return self.max.y - self.min.y

    def as_bounds(self) -> tuple[float, float, float, float]:
        return (self.min.x, self.min.y, self.max.x, self.max.y)

    def intersects(self, other: Envelope) -> bool:
        return not (
            other.min.x > self.max.x
            or other.max.x < self.min.x
            or other.min.y > self.max.y
            or other.max.y < self.min.y
        )

    def intersection(self, other: Envelope) -> Envelope | None:
        if not self.intersects(other):
            return None
        return Envelope.of(
            max(self.min.x, other.min.x),
            max(self.min.y, other.min.y),
            min(self.max.x, other.max.x),
            min(self.max.y, other.max.y),
        )


class ConvexPolygon(BaseModel):
    """Strictly convex polygon with counter-clockwise vertices (the fence shape)."""

    model_config = ConfigDict(frozen=True)

    vertices: tuple[Point, ...] = Field(..., min_length=3, description="CCW vertices, no repeats")

    @field_validator("vertices")
    @classmethod
    def _check_convex_ccw(cls, vertices: tuple[Point, ...]) -> tuple[Point, ...]:
        n = len(vertices)
        for i in range(n):
            a, b, c = vertices[i], vertices[(i + 1) % n], vertices[(i + 2) % n]
            turn = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x)
            if turn <= 0:
                raise ValueError(f"vertices are not strictly convex and counter-clockwise at index {i}")
        return vertices

    @classmethod
    def square(cls, center: Point, side: float) -> ConvexPolygon:
        """Axis-aligned square fence of the given side centered at `center`."""
        half = side / 2.0
        return cls(
            vertices=(
                Point(x=center.x - half, y=center.y - half),
                Point(x=center.x + half, y=center.y - half),
                Point(x=center.x + half, y=center.y + half),
                Point(x=center.x - half, y=center.y + half),
            )
        )

    def bounds(self) -> Envelope:
        xs = [v.x for v in self.vertices]
        ys = [v.y for v in self.vertices]
        return Envelope.of(min(xs), min(ys), max(xs), max(ys))

    def translated(self, v: Point) -> ConvexPolygon:
        return ConvexPolygon(vertices=tuple(p + v for p in self.vertices))


class Itinerary(BaseModel):
    """Timestamped locations reported by one actor, oldest first."""

    model_config = ConfigDict(frozen=True)

    points: tuple[Point, ...] = Field(..., min_length=1)
    timestamps: tuple[int, ...] = Field(..., min_length=1, description="Clock values in nanoseconds")

    @model_validator(mode="after")
    def _check_timestamps(self) -> Itinerary:
        if len(self.points) != len(self.timestamps):
            raise ValueError(
                f"itinerary has {len(self.points)} points but {len(self.timestamps)} timestamps"
            )
        for earlier, later in zip(self.timestamps, self.timestamps[1:]):
            if later <= earlier:
                raise ValueError("itinerary timestamps must be strictly increasing")
        return self

    @classmethod
    def single(cls, point: Point, timestamp: int) -> Itinerary:
        return cls(points=(point,), timestamps=(timestamp,))

    @property
    def first(self) -> Point:
        return self.points[0]

    @property
    def last(self) -> Point:
        return self.points[-1]

    @property
    def stationary(self) -> bool:
        """Only the carried-over location: the actor did not move."""
        return len(self.points) == 1

    def extended(self, point: Point, timestamp: int) -> Itinerary:
        return Itinerary(points=(*self.points, point), timestamps=(*self.timestamps, timestamp))

    def hops(self) -> list[Segment]:
        if len(self.points) == 1:
            return [Segment(start=self.points[0], end=self.points[0])]
        return [Segment(start=a, end=b) for a, b in zip(self.points, self.points[1:])]


# Grid and placement

class GridConfig(BaseModel):
    """Uniform partitioning of the bounded space into nx by ny cells"""

    model_config = ConfigDict(frozen=True)

    origin: Point = Field(default_factory=lambda: Point(x=0.0, y=0.0))
    width: float = Field(..., gt=0, allow_inf_nan=False, description="Space width in meters")
    height: float = Field(..., gt=0, allow_inf_nan=False, description="Space height in meters")
    nx: int = Field(..., ge=1, description="Cell count along x")
    ny: int = Field(..., ge=1, description="Cell count along y")

    @property
    def cell_width(self) -> float:
        return self.width / self.nx

    @property
    def cell_height(self) -> float:
        return self.height / self.ny

    @property
    def num_cells(self) -> int:
        return self.nx * self.ny

    @property
    def extent(self) -> Envelope:
        return Envelope.of(
            self.origin.x, self.origin.y, self.origin.x + self.width, self.origin.y + self.height
        )

    def cell_index(self, cell: CellId) -> tuple[int, int]:
        return cell % self.nx, cell // self.nx

    def cell_extent(self, cell: CellId) -> Envelope:
        ix, iy = self.cell_index(cell)
        return Envelope.of(
            self.origin.x + ix * self.cell_width,
            self.origin.y + iy * self.cell_height,
            self.origin.x + (ix + 1) * self.cell_width,
            self.origin.y + (iy + 1) * self.cell_height,
        )

    def cell_center(self, cell: CellId) -> Point:
        ix, iy = self.cell_index(cell)
        return Point(
            x=self.origin.x + (ix + 0.5) * self.cell_width,
            y=self.origin.y + (iy + 0.5) * self.cell_height,
        )


class PlacementMap(BaseModel):
    """Total assignment of cells to shards."""

    model_config = ConfigDict(frozen=True)

    shard_of: tuple[int, ...] = Field(..., description="Shard index per CellId")
    num_shards: int = Field(..., ge=1)

    @model_validator(mode="after")
    def _check_shards(self) -> PlacementMap:
        for shard in self.shard_of:
            if not 0 <= shard < self.num_shards:
                raise ValueError(f"shard {shard} outside [0, {self.num_shards})")
        return self

    def shard(self, cell: CellId) -> int:
        return self.shard_of[cell]

    def cells_of_shard(self, shard: int) -> list[CellId]:
        return [cell for cell, owner in enumerate(self.shard_of) if owner == shard]


# Actors and messages

class ActorId(BaseModel):
    """Identity of a virtual actor: its kind plus an integer key"""

    model_config = ConfigDict(frozen=True)

    kind: ActorKind
    key: int = Field(..., ge=0, description="Actor number, CellId, or 0 for the controller")

    @model_validator(mode="after")
    def _check_singleton(self) -> ActorId:
        if self.kind is ActorKind.SNAPSHOT_CONTROLLER and self.key != 0:
            raise ValueError("the snapshot controller is a singleton with key 0")
        return self

    @classmethod
    def moving(cls, key: int) -> ActorId:
        return cls(kind=ActorKind.MOVING, key=key)

    @classmethod
    def parse(cls, text: str) -> ActorId:
        kind, _, key = text.partition(":")
        return cls(kind=ActorKind(kind), key=int(key))

    def __str__(self) -> str:
        return f"{self.kind.value}:{self.key}"


CONTROLLER_ID = ActorId(kind=ActorKind.SNAPSHOT_CONTROLLER, key=0)


class MoveUpdate(BaseModel):
    """A move (Freshness) or a flushed epoch itinerary (Snapshot) relayed to sensors."""

    model_config = ConfigDict(frozen=True)

    actor: ActorId
    iti: Itinerary
    t_u: int = Field(..., description="Completion time of the move at its owner")
    epoch: int | None = Field(None, description="Snapshot epoch, absent under Freshness")

    @property
    def dedup_key(self) -> tuple[ActorId, int]:
        return (self.actor, self.t_u if self.epoch is None else self.epoch)


class ReactionEvent(BaseModel):
    """One invocation of a sensor's reactive method"""

    model_config = ConfigDict(frozen=True)

    sensor: ActorId
    mover: ActorId
    mover_t_u: int
    trigger_time: int
    epoch: int | None = None

    @model_validator(mode="after")
    def _check_order(self) -> ReactionEvent:
        if self.trigger_time < self.mover_t_u:
            raise ValueError("a reaction cannot trigger before the move it reacts to")
        return self

    @property
    def latency_ns(self) -> int:
        return self.trigger_time - self.mover_t_u


class SnapshotEpoch(BaseModel):
    """Start and completion of one snapshot round"""

    n: int = Field(..., ge=0)
    t_i: int
    t_j: int | None = None


class LookupResult(BaseModel):
    """Entries of one cell's index inside a window, with the index version"""

    model_config = ConfigDict(frozen=True)

    cell: CellId
    entries: tuple[tuple[ActorId, Point], ...]
    version: int


# Trace

class TraceEventKind(str, Enum):
    MOVE_DONE = "MoveDone"
    QUERY_START = "QueryStart"
    QUERY_END = "QueryEnd"
    REACTION_FIRED = "ReactionFired"
    FLUSH_SENT = "FlushSent"
    SNAPSHOT_APPLIED = "SnapshotApplied"
    SENSING_ON = "SensingOn"
    SENSING_OFF = "SensingOff"
    SPAWNED = "Spawned"
    RELAYED = "Relayed"


class MoveDonePayload(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal[TraceEventKind.MOVE_DONE] = TraceEventKind.MOVE_DONE
    source: Point
    dest: Point
    t_req: int = Field(..., description="When the move request entered the mailbox")
    t_start: int = Field(..., description="When the move turn started")


class QueryStartPayload(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal[TraceEventKind.QUERY_START] = TraceEventKind.QUERY_START
    query_id: int
    window: Envelope


class QueryHit(BaseModel):
    model_config = ConfigDict(frozen=True)

    actor: ActorId
    location: Point


class QueryEndPayload(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal[TraceEventKind.QUERY_END] = TraceEventKind.QUERY_END
    query_id: int
    version: int | None = Field(None, description="Snapshot version the result was read from")
    cell_versions: tuple[int, ...] = ()
    retries: int = 0
    results: tuple[QueryHit, ...] = ()


class ReactionFiredPayload(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal[TraceEventKind.REACTION_FIRED] = TraceEventKind.REACTION_FIRED
    mover: ActorId
    mover_t_u: int
    epoch: int | None = None


class FlushSentPayload(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal[TraceEventKind.FLUSH_SENT] = TraceEventKind.FLUSH_SENT
    epoch: int
    itinerary: Itinerary
    skew_ns: int = 0


class SnapshotAppliedPayload(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal[TraceEventKind.SNAPSHOT_APPLIED] = TraceEventKind.SNAPSHOT_APPLIED
    epoch: int


class SensingOnPayload(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal[TraceEventKind.SENSING_ON] = TraceEventKind.SENSING_ON
    predicate: Predicate


class SensingOffPayload(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal[TraceEventKind.SENSING_OFF] = TraceEventKind.SENSING_OFF


class SpawnedPayload(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal[TraceEventKind.SPAWNED] = TraceEventKind.SPAWNED
    location: Point
    fence_side: float = Field(..., gt=0)
    fence_offset: Point = Field(default_factory=lambda: Point(x=0.0, y=0.0))


class RelayedPayload(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal[TraceEventKind.RELAYED] = TraceEventKind.RELAYED
    mover: ActorId
    mover_t_u: int
    epoch: int | None = None


TracePayload = Annotated[
    Union[
        MoveDonePayload,
        QueryStartPayload,
        QueryEndPayload,
        ReactionFiredPayload,
        FlushSentPayload,
        SnapshotAppliedPayload,
        SensingOnPayload,
        SensingOffPayload,
        SpawnedPayload,
        RelayedPayload,
    ],
    Field(discriminator="kind"),
]


class TraceEvent(BaseModel):
    """One append-only trace record."""

    model_config = ConfigDict(frozen=True)

    time: int = Field(..., description="Process-wide monotone clock value in nanoseconds")
    actor: ActorId
    payload: TracePayload

    @property
    def kind(self) -> TraceEventKind:
        return self.payload.kind


class VerdictStatus(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    AMBIGUOUS = "ambiguous"


class Verdict(BaseModel):
    """Outcome of one oracle check"""

    status: VerdictStatus
    witness: str | None = Field(None, description="What was violated, required on Fail")

    @model_validator(mode="after")
    def _fail_has_witness(self) -> Verdict:
        if self.status is VerdictStatus.FAIL and not self.witness:
            raise ValueError("a failing verdict must carry a witness")
        return self

    @property
    def failed(self) -> bool:
        return self.status is VerdictStatus.FAIL


class VerificationSummary(BaseModel):
    """Verdict tallies over a whole trace"""

    semantics: Semantics
    checks: int = 0
    passed: int = 0
    ambiguous: int = 0
    failures: list[str] = Field(default_factory=list, description="Witnesses of failing checks")

    @property
    def failed(self) -> int:
        return len(self.failures)

    @property
    def ambiguous_fraction(self) -> float:
        return self.ambiguous / self.checks if self.checks else 0.0

    def add(self, verdict: Verdict) -> None:
        self.checks += 1
        if verdict.status is VerdictStatus.PASS:
            self.passed += 1
        elif verdict.status is VerdictStatus.AMBIGUOUS:
            self.ambiguous += 1
        else:
            self.failures.append(verdict.witness or "")


# Benchmark report

class MetricsReport(BaseModel):
    """Throughput and latency summary of one benchmark run"""

    semantics: Semantics
    model: str
    shards: int
    actors: int
    cells: int
    snapshot_interval_ms: int
    sensing_pct: float
    query_ratio: float
    seed: int
    duration_s: float
    moves_total: int = 0
    moves_per_s: float = 0.0
    move_p50_ms: float = 0.0
    move_p99_ms: float = 0.0
    queries_total: int = 0
    queries_per_s: float = 0.0
    query_p50_ms: float = 0.0
    query_p99_ms: float = 0.0
    reactions_total: int = 0
    reactions_per_s: float = 0.0
    reaction_p50_ms: float = 0.0
    reaction_p99_ms: float = 0.0
    snapshot_rounds: int = 0
    query_retries: int = 0
    ambiguous_fraction: float = 0.0

    # Run metadata outside the CSV
    config_hash: str = ""
    placement: str = "spatial"
    failed_queries: int = Field(0, description="Snapshot queries that exhausted their retries")
    oracle_failures: int = 0


# Road network

class RoadGraph(BaseModel):
    """Undirected road network used by the road-net movement model"""

    nodes: dict[int, Point]
    edges: tuple[tuple[int, int], ...]
    adjacency: dict[int, tuple[int, ...]] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _build_adjacency(self) -> RoadGraph:
        neighbors: dict[int, list[int]] = {node: [] for node in self.nodes}
        seen: set[tuple[int, int]] = set()
        for u, v in self.edges:
            if u not in self.nodes or v not in self.nodes:
                raise ValueError(f"edge ({u}, {v}) references an unknown node")
            if self.nodes[u] == self.nodes[v]:
                raise ValueError(f"edge ({u}, {v}) has zero length")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise ValueError(f"duplicate edge ({u}, {v})")
            seen.add(key)
            neighbors[u].append(v)
            neighbors[v].append(u)
        self.adjacency = {node: tuple(sorted(adj)) for node, adj in neighbors.items()}
        return self

    def edge_segment(self, u: int, v: int) -> Segment:
        return Segment(start=self.nodes[u], end=self.nodes[v])
