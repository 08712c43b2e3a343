"""Closed-loop benchmark: spawn a workload, drive it with client workers, measure and verify."""

from __future__ import annotations

import asyncio
import csv
import math
import time
from collections.abc import Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from apify import Actor

from src.config import BenchmarkConfig
from src.database import MovingActorDatabase
from src.errors import EmptySamples, SnapshotUnstable
from src.grid import build_placement, build_random_placement, cell_weights_from_points
from src.models import (
    ActorId,
    Envelope,
    MetricsReport,
    Placement,
    Predicate,
    QueryEndPayload,
    ReactionEvent,
    TraceEvent,
    VerificationSummary,
)
from src.trace import write_trace
from src.trace_oracle import verify_trace
from src.utils import config_hash
from src.workloads import MovementGenerator

CSV_COLUMNS = (
    "semantics",
    "model",
    "shards",
    "actors",
    "cells",
    "snapshot_interval_ms",
    "sensing_pct",
    "query_ratio",
    "seed",
    "duration_s",
    "moves_total",
    "moves_per_s",
    "move_p50_ms",
    "move_p99_ms",
    "queries_total",
    "queries_per_s",
    "query_p50_ms",
    "query_p99_ms",
    "reactions_total",
    "reactions_per_s",
    "reaction_p50_ms",
    "reaction_p99_ms",
    "snapshot_rounds",
    "query_retries",
    "ambiguous_fraction",
)


def percentile(samples: Sequence[float], q: float) -> float:
    """Nearest-rank percentile: the value at rank ceil(q * n) of the sorted samples.

    Raises:
        EmptySamples: no samples
        ValueError: q outside (0, 1]
    """
    if not samples:
        raise EmptySamples("percentile of an empty sample set")
    if not 0 < q <= 1:
        raise ValueError(f"quantile must be in (0, 1], got {q}")
    ordered = np.sort(np.asarray(samples, dtype=float))
    # q as written in decimal, so 0.07 * 100 is rank 7 and not 8
    rank = max(math.ceil(Fraction(str(q)) * len(ordered)), 1)
    return float(ordered[rank - 1])


def _csv_value(value: object) -> str:
    if isinstance(value, float):
        return f"{value:.3f}"
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def emit_csv(report: MetricsReport, path: str | Path) -> Path:
    """Append the report as one CSV row, writing the header when the file is new or empty.

    IO errors (a missing directory, for one) propagate and name the path.
    """
    path = Path(path)
    new_file = not path.exists() or path.stat().st_size == 0
    with path.open("a", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        if new_file:
            writer.writerow(CSV_COLUMNS)
        writer.writerow([_csv_value(getattr(report, column)) for column in CSV_COLUMNS])
    return path


@dataclass
class Sample:
    started_s: float  # offset from the start of the measured run
    latency_s: float


@dataclass
class ClientStats:
    moves: list[Sample] = field(default_factory=list)
    queries: list[Sample] = field(default_factory=list)
    failed_queries: int = 0


@dataclass
class BenchmarkResult:
    report: MetricsReport
    events: list[TraceEvent]
    summary: VerificationSummary | None = None
    trace_path: Path | None = None


def _latency_ms(samples: Sequence[float], q: float) -> float:
    return percentile(samples, q) * 1000 if samples else 0.0


async def _run_client(
    client: int,
    owned: list[int],
    db: MovingActorDatabase,
    generator: MovementGenerator,
    cfg: BenchmarkConfig,
    started: float,
    deadline: float,
) -> ClientStats:
    """Issue requests back to back until the deadline or the request budget runs out."""
    stats = ClientStats()
    rng = np.random.default_rng([cfg.seed, client])
    op = 0
    while time.perf_counter() < deadline:
        if cfg.ops_per_client is not None and op >= cfg.ops_per_client:
            break
        index = owned[op % len(owned)]
        actor = ActorId.moving(index)
        op += 1
        t0 = time.perf_counter()
        if rng.random() < cfg.query_ratio:
            window = Envelope.around(generator.position(index), cfg.query_side)
            try:
                await db.find_actors(actor, window)
            except SnapshotUnstable as e:
                stats.failed_queries += 1
                Actor.log.warning(f"Client {client}: {e}")
                continue
            stats.queries.append(Sample(t0 - started, time.perf_counter() - t0))
        else:
            await db.move(actor, generator.next_point(index))
            stats.moves.append(Sample(t0 - started, time.perf_counter() - t0))
    return stats


async def run_benchmark(cfg: BenchmarkConfig) -> BenchmarkResult:
    """Run one closed-loop benchmark.

    Spawns `num_actors` moving actors, turns on Cross sensing with a recording callback for
    `sensing_pct` of them, and lets `shards * clients_per_shard` clients drive the actors
    they own for `duration_s` (or `ops_per_client` requests each). Snapshot queries that
    give up are counted, not raised.

    Args:
        cfg: Validated benchmark configuration

    Returns:
        The metrics report, the recorded trace and, when enabled, the oracle summary
    """
    grid = cfg.space
    generator = MovementGenerator.for_config(cfg, grid)
    initial = generator.initial_points()
    if cfg.placement is Placement.RANDOM:
        placement = build_random_placement(grid, cfg.shards, cfg.seed)
    else:
        placement = build_placement(grid, cfg.shards, cell_weights_from_points(grid, initial))
    db_config = cfg.database_config(grid)

    Actor.log.info(
        f"Benchmark: {cfg.semantics.value}, {cfg.model.value} model, {cfg.num_actors} actors, "
        f"{grid.num_cells} cells, {cfg.shards} shard(s), {cfg.duration_s}s"
    )
    reactions: list[ReactionEvent] = []
    rng = np.random.default_rng(cfg.seed)
    num_sensors = math.floor(cfg.sensing_pct * cfg.num_actors)
    sensors = sorted(int(i) for i in rng.choice(cfg.num_actors, size=num_sensors, replace=False))

    async with MovingActorDatabase(db_config, placement=placement) as db:
        await asyncio.gather(*(db.spawn(i, pt) for i, pt in enumerate(initial)))
        await asyncio.gather(
            *(db.start_reactive_sensing(ActorId.moving(i), Predicate.CROSS, reactions.append) for i in sensors)
        )
        Actor.log.info(f"Spawned {cfg.num_actors} actors, {num_sensors} sensing")

        num_clients = min(cfg.shards * cfg.clients_per_shard, cfg.num_actors)
        owned = [list(range(c, cfg.num_actors, num_clients)) for c in range(num_clients)]
        started = time.perf_counter()
        started_ns = db.clock.now()
        deadline = started + cfg.duration_s
        per_client = await asyncio.gather(
            *(_run_client(c, owned[c], db, generator, cfg, started, deadline) for c in range(num_clients))
        )
        elapsed = time.perf_counter() - started
        try:
            await db.quiesce(timeout_s=max(5.0, db_config.snapshot_interval_ms / 250))
        except asyncio.TimeoutError:
            Actor.log.warning("Actors still busy after the clients stopped, collecting the trace anyway")
        epochs = await db.snapshot_epochs()
        Actor.log.info(
            f"Turns per shard {db.kernel.shard_turns()}, from other shards {db.kernel.shard_remote_turns()}"
        )
    events = db.tracer.events()
    Actor.log.info(f"Clients done after {elapsed:.2f}s, {len(events)} trace events")

    warmup = cfg.warmup_s
    measured = max(elapsed - warmup, 1e-9)
    warm_ns = started_ns + int(warmup * 1e9)
    moves = [s.latency_s for stats in per_client for s in stats.moves if s.started_s >= warmup]
    queries = [s.latency_s for stats in per_client for s in stats.queries if s.started_s >= warmup]
    reaction_lat = [r.latency_ns / 1e9 for r in reactions if r.trigger_time >= warm_ns]
    retries = sum(
        e.payload.retries
        for e in events
        if isinstance(e.payload, QueryEndPayload) and e.time >= warm_ns
    )

    report = MetricsReport(
        semantics=cfg.semantics,
        model=cfg.model.value,
        shards=cfg.shards,
        actors=cfg.num_actors,
        cells=grid.num_cells,
        snapshot_interval_ms=cfg.snapshot_interval_ms,
        sensing_pct=cfg.sensing_pct,
        query_ratio=cfg.query_ratio,
        seed=cfg.seed,
        duration_s=round(measured, 3),
        moves_total=len(moves),
        moves_per_s=len(moves) / measured,
        move_p50_ms=_latency_ms(moves, 0.5),
        move_p99_ms=_latency_ms(moves, 0.99),
        queries_total=len(queries),
        queries_per_s=len(queries) / measured,
        query_p50_ms=_latency_ms(queries, 0.5),
        query_p99_ms=_latency_ms(queries, 0.99),
        reactions_total=len(reaction_lat),
        reactions_per_s=len(reaction_lat) / measured,
        reaction_p50_ms=_latency_ms(reaction_lat, 0.5),
        reaction_p99_ms=_latency_ms(reaction_lat, 0.99),
        snapshot_rounds=sum(1 for e in epochs if e.t_j is not None),
        query_retries=retries,
        config_hash=config_hash(cfg),
        placement=cfg.placement.value,
        failed_queries=sum(stats.failed_queries for stats in per_client),
    )

    summary = None
    if cfg.verify:
        summary = verify_trace(
            events, cfg.semantics, grid=grid, fence_retention_epochs=db_config.fence_retention_epochs
        )
        report.ambiguous_fraction = summary.ambiguous_fraction
        report.oracle_failures = summary.failed

    trace_path = None
    if cfg.trace is not None:
        trace_path = write_trace(events, cfg.trace)
        Actor.log.info(f"Trace written to {trace_path}")
    if cfg.out_csv is not None:
        emit_csv(report, cfg.out_csv)
        Actor.log.info(f"Report appended to {cfg.out_csv}")

    Actor.log.info(
        f"{report.moves_per_s:.1f} moves/s (p50 {report.move_p50_ms:.3f} ms), "
        f"{report.queries_per_s:.1f} queries/s, {report.reactions_total} reactions "
        f"(p50 {report.reaction_p50_ms:.3f} ms)"
    )
    return BenchmarkResult(report=report, events=events, summary=summary, trace_path=trace_path)

