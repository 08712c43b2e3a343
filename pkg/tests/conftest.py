"""Pytest configuration and fixtures."""

from collections.abc import AsyncIterator

import pytest

from src.config import DatabaseConfig
from src.database import MovingActorDatabase
from src.mock_traces import generate_mock_fresh_trace, generate_mock_snapshot_trace
from src.models import GridConfig, Semantics, TraceEvent


@pytest.fixture
def small_grid() -> GridConfig:
    """4 x 4 grid of 1 km cells."""
    return GridConfig(width=4000, height=4000, nx=4, ny=4)


@pytest.fixture
def fresh_config(small_grid: GridConfig) -> DatabaseConfig:
    """Freshness database on the small grid, two shards."""
    return DatabaseConfig(semantics=Semantics.FRESH, grid=small_grid, num_shards=2, reply_timeout_s=5)


@pytest.fixture
def snap_config(small_grid: GridConfig) -> DatabaseConfig:
    """Snapshot database with short epochs so tests see several rounds."""
    return DatabaseConfig(
        semantics=Semantics.SNAP,
        grid=small_grid,
        num_shards=2,
        snapshot_interval_ms=100,
        max_clock_skew_ms=2,
        timer_jitter_ms=2,
        reply_timeout_s=5,
    )


@pytest.fixture
async def fresh_db(fresh_config: DatabaseConfig) -> AsyncIterator[MovingActorDatabase]:
    async with MovingActorDatabase(fresh_config) as db:
        yield db


@pytest.fixture
async def snap_db(snap_config: DatabaseConfig) -> AsyncIterator[MovingActorDatabase]:
    async with MovingActorDatabase(snap_config) as db:
        yield db


@pytest.fixture
def mock_fresh_trace() -> list[TraceEvent]:
    """Fixture providing a passing Freshness trace."""
    return generate_mock_fresh_trace()


@pytest.fixture
def mock_snapshot_trace() -> list[TraceEvent]:
    """Fixture providing a passing Snapshot trace."""
    return generate_mock_snapshot_trace()
