"""Command line: `madb run`, `madb verify` and `madb gen-graph`."""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path
from typing import Any

from apify import Actor
from apify.log import ActorLogFormatter
from pydantic import ValidationError

from src.benchmark import run_benchmark
from src.config import WorkloadConfig, load_benchmark_config
from src.errors import ConfigError, IncompleteTrace, InvalidGraph
from src.models import MovementModel, Placement, Semantics
from src.scenarios import list_presets
from src.trace import read_trace
from src.trace_oracle import verify_trace
from src.workloads import generate_lattice_graph, write_road_graph

# flag destination -> BenchmarkConfig field
_RUN_FLAGS = {
    "semantics": "semantics",
    "snapshot_interval_ms": "snapshot_interval_ms",
    "model": "model",
    "actors": "num_actors",
    "shards": "shards",
    "space_km2": "space_km2",
    "cells": "cells",
    "hotspots": "hotspots",
    "sensing_pct": "sensing_pct",
    "query_ratio": "query_ratio",
    "duration_s": "duration_s",
    "seed": "seed",
    "out_csv": "out_csv",
    "trace": "trace",
    "placement": "placement",
    "fence_side": "fence_side",
    "query_side": "query_side",
    "clients_per_shard": "clients_per_shard",
    "road_file": "road_file",
    "warmup_s": "warmup_s",
    "ops_per_client": "ops_per_client",
    "turn_cost_ms": "turn_cost_ms",
    "remote_cost_ms": "remote_cost_ms",
    "cross_shard_latency_ms": "cross_shard_latency_ms",
}


def setup_logging(level: str) -> None:
    handler = logging.StreamHandler()
    handler.setFormatter(ActorLogFormatter())
    logger = logging.getLogger("apify")
    logger.handlers = [handler]
    logger.setLevel(level.upper())
    logger.propagate = False


def _add_space_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--space-km2", type=float, help="Area of the square space")
    parser.add_argument("--cells", type=int, help="Number of grid cells (a square number)")


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="madb", description="Moving actor database benchmark")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run a closed-loop benchmark")
    run.add_argument("--config", type=Path, help="Flat key=value settings file")
    run.add_argument("--preset", choices=list_presets())
    run.add_argument("--semantics", choices=[s.value for s in Semantics])
    run.add_argument("--snapshot-interval-ms", type=int)
    run.add_argument("--model", choices=[m.value for m in MovementModel])
    run.add_argument("--actors", type=int)
    run.add_argument("--shards", type=int)
    _add_space_flags(run)
    run.add_argument("--hotspots", type=int)
    run.add_argument("--sensing-pct", type=float, help="Fraction of actors with reactive sensing")
    run.add_argument("--query-ratio", type=float, help="Fraction of requests that are range queries")
    run.add_argument("--duration-s", type=float)
    run.add_argument("--warmup-s", type=float)
    run.add_argument("--ops-per-client", type=int, help="Stop each client after this many requests")
    run.add_argument("--seed", type=int)
    run.add_argument("--placement", choices=[p.value for p in Placement])
    run.add_argument("--fence-side", type=float)
    run.add_argument("--query-side", type=float)
    run.add_argument("--max-speed-kmh", type=float)
    run.add_argument("--clients-per-shard", type=int)
    run.add_argument("--turn-cost-ms", type=float, help="Service time of one actor turn")
    run.add_argument("--remote-cost-ms", type=float, help="Extra service time of a cross-shard message")
    run.add_argument("--cross-shard-latency-ms", type=float)
    run.add_argument("--road-file", type=Path)
    run.add_argument("--out-csv", type=Path)
    run.add_argument("--trace", type=Path, help="Write the execution trace here")
    run.add_argument("--no-verify", action="store_true", help="Skip the trace oracle")

    verify = commands.add_parser("verify", help="Check a recorded trace against its semantics")
    verify.add_argument("trace", type=Path)
    verify.add_argument("--semantics", required=True, choices=[s.value for s in Semantics])
    _add_space_flags(verify)
    verify.add_argument("--fence-retention-epochs", type=int, default=3)

    graph = commands.add_parser("gen-graph", help="Write a lattice road graph")
    graph.add_argument("out", type=Path)
    graph.add_argument("--size", type=int, default=20, help="Nodes per lattice side")
    _add_space_flags(graph)
    return parser


def run_overrides(args: argparse.Namespace) -> dict[str, Any]:
    """Command line values that were actually given, keyed by config field."""
    overrides = {
        field: getattr(args, flag) for flag, field in _RUN_FLAGS.items() if getattr(args, flag) is not None
    }
    if args.max_speed_kmh is not None:
        overrides["max_speed"] = args.max_speed_kmh / 3.6
    if args.no_verify:
        overrides["verify"] = False
    return overrides


def _workload_space(args: argparse.Namespace) -> WorkloadConfig:
    values = {k: v for k, v in (("space_km2", args.space_km2), ("cells", args.cells)) if v is not None}
    try:
        return WorkloadConfig(**values)
    except ValidationError as e:
        raise ConfigError(f"invalid space: {e}") from e


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_benchmark_config(preset=args.preset, config_file=args.config, overrides=run_overrides(args))
    result = asyncio.run(run_benchmark(cfg))
    print(json.dumps(result.report.model_dump(mode="json"), indent=2))
    if result.summary is not None and result.summary.failed:
        Actor.log.error(f"{result.summary.failed} oracle check(s) failed")
        return 1
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    events = read_trace(args.trace)
    grid = _workload_space(args).space if args.cells or args.space_km2 else None
    summary = verify_trace(
        events,
        Semantics(args.semantics),
        grid=grid,
        fence_retention_epochs=args.fence_retention_epochs,
    )
    print(json.dumps({**summary.model_dump(mode="json"), "ambiguous_fraction": summary.ambiguous_fraction}, indent=2))
    return 1 if summary.failed else 0


def cmd_gen_graph(args: argparse.Namespace) -> int:
    space = _workload_space(args).space
    graph = generate_lattice_graph(args.size, space)
    write_road_graph(graph, args.out, space)
    Actor.log.info(f"Wrote {len(graph.nodes)} nodes and {len(graph.edges)} edges to {args.out}")
    return 0


_COMMANDS = {"run": cmd_run, "verify": cmd_verify, "gen-graph": cmd_gen_graph}


def cli(argv: list[str] | None = None) -> int:
    args = build_arg_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, IncompleteTrace, InvalidGraph) as e:
        Actor.log.error(str(e))
        return 2
    except OSError as e:
        Actor.log.error(f"I/O error: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(cli())
