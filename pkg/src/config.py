"""Database, workload and benchmark configuration.

Benchmark settings are layered, lowest precedence first: model defaults, a named preset,
a flat `key=value` config file, `MADB_`-prefixed environment variables (a `.env` file is
loaded first), and explicit overrides from the command line or the Actor input.
"""

from __future__ import annotations

import math
import os
from pathlib import Path
from typing import Any

from apify import Actor
from dotenv import dotenv_values, load_dotenv
from pydantic import BaseModel, Field, ValidationError, model_validator

from src.errors import ConfigError
from src.models import GridConfig, MovementModel, Placement, Point, Semantics
from src.scenarios import get_preset

ENV_PREFIX = "MADB_"


class DatabaseConfig(BaseModel):
    """Settings of one moving actor database instance"""

    semantics: Semantics = Semantics.FRESH
    grid: GridConfig
    num_shards: int = Field(1, ge=1)
    placement: Placement = Placement.SPATIAL
    snapshot_interval_ms: int = Field(1000, gt=0, description="Snapshot epoch length")
    max_clock_skew_ms: float = Field(5.0, ge=0, description="Bound on per-shard clock offsets")
    timer_jitter_ms: float = Field(5.0, ge=0, description="Uniform jitter of every timer fire")
    cross_shard_latency_ms: float = Field(0.5, ge=0, description="Network delay of a message between shards")
    workers_per_shard: int = Field(4, ge=1, description="Concurrent actor turns per shard")
    turn_cost_ms: float = Field(0.0, ge=0, description="Service time every actor turn holds its worker slot")
    remote_cost_ms: float = Field(0.0, ge=0, description="Extra service time of a message from another shard")
    fence_side_m: float = Field(1000.0, gt=0)
    fence_offset: Point = Field(default_factory=lambda: Point(x=0.0, y=0.0))
    dedup_window: int = Field(1024, ge=1, description="Stream updates remembered for deduplication")
    query_max_retries: int = Field(5, ge=0)
    reply_timeout_s: float | None = Field(None, gt=0)
    fence_retention_epochs: int = Field(3, ge=1, description="Closed epochs a sensor keeps listening to")
    seed: int = 0
    trace_enabled: bool = True

    @property
    def snapshot_interval_ns(self) -> int:
        return self.snapshot_interval_ms * 1_000_000

    @property
    def max_clock_skew_ns(self) -> int:
        return int(self.max_clock_skew_ms * 1_000_000)

    @property
    def timer_jitter_ns(self) -> int:
        return int(self.timer_jitter_ms * 1_000_000)

    @property
    def cross_shard_latency_ns(self) -> int:
        return int(self.cross_shard_latency_ms * 1_000_000)

    @property
    def turn_cost_ns(self) -> int:
        return int(self.turn_cost_ms * 1_000_000)

    @property
    def remote_cost_ns(self) -> int:
        return int(self.remote_cost_ms * 1_000_000)


class WorkloadConfig(BaseModel):
    """Movement model and request mix of a benchmark workload"""

    model: MovementModel = MovementModel.UNIFORM
    num_actors: int = Field(1000, ge=1)
    space_km2: float = Field(100.0, gt=0)
    cells: int = Field(100, ge=1)
    grid_nx: int | None = Field(None, ge=1, description="Cell columns when the grid is not square")
    grid_ny: int | None = Field(None, ge=1)
    max_speed: float = Field(80 / 3.6, gt=0, description="m/s")
    fence_side: float = Field(1000.0, gt=0)
    query_side: float = Field(1000.0, gt=0)
    sensing_pct: float = Field(0.125, ge=0, le=1)
    query_ratio: float = Field(0.0, ge=0, le=1)
    hotspots: int = Field(10, ge=1)
    sigma: float | None = Field(None, gt=0, description="Hotspot spread, side/(4*sqrt(hotspots)) if unset")
    road_file: Path | None = None
    road_graph_size: int = Field(20, ge=2, description="Lattice side when no road file is given")
    fixed_speed: float = Field(22.0, gt=0, description="Road network speed in m/s")
    step_s: float = Field(1.0, gt=0, description="Simulated time between two moves of one actor")
    redraw_period_s: float | None = Field(None, gt=0, description="Heading redraw period")
    seed: int = 0
    duration_s: float = Field(10.0, gt=0)
    clients_per_shard: int = Field(4, ge=1)

    @model_validator(mode="after")
    def _check_grid(self) -> WorkloadConfig:
        if (self.grid_nx is None) != (self.grid_ny is None):
            raise ValueError("grid_nx and grid_ny must be given together")
        if self.grid_nx is not None and self.grid_ny is not None:
            if self.grid_nx * self.grid_ny != self.cells:
                raise ValueError(f"{self.grid_nx}x{self.grid_ny} grid does not have {self.cells} cells")
        elif math.isqrt(self.cells) ** 2 != self.cells:
            raise ValueError(f"{self.cells} cells is not a square number; set grid_nx and grid_ny")
        return self

    @property
    def space(self) -> GridConfig:
        """Grid over a space of `space_km2` with square cells."""
        nx = self.grid_nx or math.isqrt(self.cells)
        ny = self.grid_ny or math.isqrt(self.cells)
        cell_side = math.sqrt(self.space_km2 * 1e6 / (nx * ny))
        return GridConfig(width=nx * cell_side, height=ny * cell_side, nx=nx, ny=ny)

    @property
    def effective_sigma(self) -> float:
        if self.sigma is not None:
            return self.sigma
        side = math.sqrt(self.space_km2 * 1e6)
        return side / (4 * math.sqrt(self.hotspots))


class BenchmarkConfig(WorkloadConfig):
    """A workload plus the database deployment it runs against"""

    semantics: Semantics = Semantics.FRESH
    shards: int = Field(1, ge=1)
    snapshot_interval_ms: int = Field(1000, gt=0)
    placement: Placement = Placement.SPATIAL
    warmup_s: float = Field(0.0, ge=0, description="Samples started earlier are not reported")
    cross_shard_latency_ms: float = Field(0.5, ge=0)
    max_clock_skew_ms: float = Field(5.0, ge=0)
    timer_jitter_ms: float = Field(5.0, ge=0)
    workers_per_shard: int = Field(4, ge=1)
    turn_cost_ms: float = Field(2.0, ge=0, description="Per-turn service time, sets the capacity of a shard")
    remote_cost_ms: float = Field(1.0, ge=0)
    ops_per_client: int | None = Field(None, ge=1, description="Stop each client after this many requests")
    verify: bool = True
    out_csv: Path | None = None
    trace: Path | None = None

    @model_validator(mode="after")
    def _check_shards(self) -> BenchmarkConfig:
        if self.shards & (self.shards - 1):
            raise ValueError(f"shards must be a power of two, got {self.shards}")
        if self.warmup_s >= self.duration_s:
            raise ValueError("warmup_s must be shorter than duration_s")
        return self

    def database_config(self, grid: GridConfig | None = None) -> DatabaseConfig:
        return DatabaseConfig(
            semantics=self.semantics,
            grid=grid or self.space,
            num_shards=self.shards,
            placement=self.placement,
            snapshot_interval_ms=self.snapshot_interval_ms,
            max_clock_skew_ms=self.max_clock_skew_ms,
            timer_jitter_ms=self.timer_jitter_ms,
            cross_shard_latency_ms=self.cross_shard_latency_ms,
            workers_per_shard=self.workers_per_shard,
            turn_cost_ms=self.turn_cost_ms,
            remote_cost_ms=self.remote_cost_ms,
            fence_side_m=self.fence_side,
            seed=self.seed,
        )


def _clean(values: dict[str, Any]) -> dict[str, Any]:
    return {k.lower(): v for k, v in values.items() if v is not None and v != ""}


def read_config_file(path: str | Path) -> dict[str, Any]:
    """Flat `key=value` settings; keys are BenchmarkConfig field names."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    values = _clean(dotenv_values(path))
    unknown = set(values) - set(BenchmarkConfig.model_fields)
    if unknown:
        raise ConfigError(f"{path}: unknown settings {', '.join(sorted(unknown))}")
    return values


def read_environment(environ: dict[str, str] | None = None) -> dict[str, Any]:
    """Settings from `MADB_<FIELD>` variables, after loading a `.env` file if present."""
    if environ is None:
        load_dotenv()
        environ = dict(os.environ)
    values = {
        key[len(ENV_PREFIX):]: value
        for key, value in environ.items()
        if key.startswith(ENV_PREFIX)
    }
    return {k: v for k, v in _clean(values).items() if k in BenchmarkConfig.model_fields}


def load_benchmark_config(
    *,
    preset: str | None = None,
    config_file: str | Path | None = None,
    overrides: dict[str, Any] | None = None,
    environ: dict[str, str] | None = None,
) -> BenchmarkConfig:
    """Merge every configuration source into a validated BenchmarkConfig.

    Args:
        preset: Name of a preset from `scenarios`
        config_file: Flat key=value file
        overrides: Highest-precedence values (command line flags, Actor input)
        environ: Environment to read instead of `os.environ`

    Returns:
        Validated configuration

    Raises:
        ConfigError: unknown preset, unreadable file or invalid values
    """
    file_values = read_config_file(config_file) if config_file else {}
    env_values = read_environment(environ)
    explicit = _clean(overrides or {})

    layers: dict[str, Any] = {}
    if preset:
        shards = explicit.get("shards", env_values.get("shards", file_values.get("shards", 1)))
        try:
            layers.update(get_preset(preset, int(shards)))
        except (KeyError, ValueError) as e:
            raise ConfigError(str(e)) from e
        Actor.log.info(f"Using preset {preset!r} for {shards} shard(s)")
    layers.update(file_values)
    layers.update(env_values)
    layers.update(explicit)

    try:
        return BenchmarkConfig.model_validate(layers)
    except ValidationError as e:
        raise ConfigError(f"invalid benchmark configuration: {e}") from e
