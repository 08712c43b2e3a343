"""Exceptions raised by the moving actor database."""


class MovingActorDbError(Exception):
    """Base class for every error raised by this package"""


class DegenerateInput(MovingActorDbError):
    """Fewer than three distinct points, or all points collinear."""


class OutOfBounds(MovingActorDbError):
    """A location or range lies outside the partitioned space."""


class InvalidShardCount(MovingActorDbError):
    """Shard counts must be powers of two."""


class KernelStopped(MovingActorDbError):
    """The actor kernel has been shut down."""


class ReplyTimeout(MovingActorDbError):
    """A request did not get its reply before the configured deadline."""


class VersionGap(MovingActorDbError):
    """An index batch skipped a snapshot version."""

    def __init__(self, cell: int, current: int, requested: int):
        super().__init__(f"cell {cell}: index at version {current} cannot jump to {requested}")
        self.cell = cell
        self.current = current
        self.requested = requested


class DuplicateFlush(MovingActorDbError):
    """A moving actor flushed twice for the same epoch."""


class StaleRound(MovingActorDbError):
    """An announcement referred to a round the controller already closed."""


class SnapshotUnstable(MovingActorDbError):
    """A snapshot query kept seeing mixed index versions after all retries."""


class InvalidGraph(MovingActorDbError):
    """Malformed road graph input."""

    def __init__(self, message: str, line_no: int | None = None):
        prefix = f"line {line_no}: " if line_no is not None else ""
        super().__init__(f"{prefix}{message}")
        self.line_no = line_no


class IncompleteTrace(MovingActorDbError):
    """The trace lacks events a check needs."""


class EmptySamples(MovingActorDbError):
    """Percentiles need at least one sample."""


class ConfigError(MovingActorDbError):
    """Invalid benchmark or database configuration."""
