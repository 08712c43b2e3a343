"""Uniform grid partitioning and KD-tree placement of cells onto shards."""

import math
from collections.abc import Iterable, Sequence

import numpy as np

from src.errors import InvalidShardCount, OutOfBounds
from src.geometry import envelope_contains
from src.models import CellId, Envelope, GridConfig, PlacementMap, Point, Segment


def cell_of(g: GridConfig, pt: Point) -> CellId:
    """Row-major id of the half-open cell holding `pt`; the max edges clamp to the last cell.

    Examples:
        >>> g = GridConfig(width=10000, height=10000, nx=10, ny=10)
        >>> cell_of(g, Point(x=1500, y=250))
        1
        >>> cell_of(g, Point(x=10000, y=10000))
        99
    """
    if not envelope_contains(g.extent, pt):
        raise OutOfBounds(f"{pt} is outside the space {g.extent}")
    ix = min(math.floor((pt.x - g.origin.x) / g.cell_width), g.nx - 1)
    iy = min(math.floor((pt.y - g.origin.y) / g.cell_height), g.ny - 1)
    return iy * g.nx + ix


def _closed_range(lo: float, hi: float, origin: float, size: float, count: int) -> range:
    """Indices of the closed intervals [i*size, (i+1)*size] that meet [lo, hi]."""
    first = max(math.ceil((lo - origin) / size) - 1, 0)
    last = min(math.floor((hi - origin) / size), count - 1)
    return range(first, last + 1)


def cells_of_envelope(g: GridConfig, e: Envelope) -> set[CellId]:
    """Cells whose closed extent intersects `e`."""
    clipped = e.intersection(g.extent)
    if clipped is None:
        raise OutOfBounds(f"range {e} does not intersect the space {g.extent}")
    columns = _closed_range(clipped.min.x, clipped.max.x, g.origin.x, g.cell_width, g.nx)
    rows = _closed_range(clipped.min.y, clipped.max.y, g.origin.y, g.cell_height, g.ny)
    return {iy * g.nx + ix for iy in rows for ix in columns}


def cells_of_segment(g: GridConfig, s: Segment) -> set[CellId]:
    """Supercover of a segment: every cell whose closed extent the segment touches."""
    start_cell = cell_of(g, s.start)
    end_cell = cell_of(g, s.end)
    if s.is_degenerate:
        return {start_cell}

    (x0, y0), (x1, y1) = s.start.as_tuple(), s.end.as_tuple()
    if x0 > x1:
        x0, y0, x1, y1 = x1, y1, x0, y0

    cells = {start_cell, end_cell}
    for ix in _closed_range(x0, x1, g.origin.x, g.cell_width, g.nx):
        col_lo = max(x0, g.origin.x + ix * g.cell_width)
        col_hi = min(x1, g.origin.x + (ix + 1) * g.cell_width)
        if x1 == x0:
            ya, yb = y0, y1
        else:
            slope = (y1 - y0) / (x1 - x0)
            ya = y0 + (col_lo - x0) * slope
            yb = y0 + (col_hi - x0) * slope
        for iy in _closed_range(min(ya, yb), max(ya, yb), g.origin.y, g.cell_height, g.ny):
            cells.add(iy * g.nx + ix)
    return cells


def _balanced_split(weights: Sequence[float]) -> int:
    """Index k (1 <= k < len) splitting the weights as evenly as possible; weighted median."""
    total = float(sum(weights))
    if total <= 0:
        return len(weights) // 2
    best_k, best_gap = 1, math.inf
    running = 0.0
    for k in range(1, len(weights)):
        running += weights[k - 1]
        gap = abs(total - 2 * running)
        if gap < best_gap:
            best_k, best_gap = k, gap
    return best_k


def build_placement(
    g: GridConfig,
    num_shards: int,
    cell_weights: Sequence[float] | None = None,
) -> PlacementMap:
    """Assign cells to shards by recursive KD splits at the weighted median.

    The split axis alternates x, y, x, ... and falls back to the other axis when a region is
    a single column or row. Every shard owns a rectangle of cell indices (possibly empty when
    there are more shards than cells).

    Args:
        g: Grid to partition
        num_shards: Power of two, at least 1
        cell_weights: Non-negative weight per cell (uniform when omitted)

    Returns:
        PlacementMap covering every cell
    """
    if num_shards < 1 or num_shards & (num_shards - 1):
        raise InvalidShardCount(f"shard count must be a power of two, got {num_shards}")
    weights = list(cell_weights) if cell_weights is not None else [1.0] * g.num_cells
    if len(weights) != g.num_cells:
        raise ValueError(f"expected {g.num_cells} cell weights, got {len(weights)}")
    if any(w < 0 for w in weights):
        raise ValueError("cell weights must be non-negative")

    shard_of = [0] * g.num_cells

    def assign(x0: int, x1: int, y0: int, y1: int, shard: int) -> None:
        for iy in range(y0, y1):
            for ix in range(x0, x1):
                shard_of[iy * g.nx + ix] = shard

    def split(x0: int, x1: int, y0: int, y1: int, first: int, count: int, axis: int) -> None:
        if count == 1:
            assign(x0, x1, y0, y1, first)
            return
        if axis == 0 and x1 - x0 < 2:
            axis = 1
        elif axis == 1 and y1 - y0 < 2:
            axis = 0
        if (axis == 0 and x1 - x0 < 2) or (axis == 1 and y1 - y0 < 2):
            assign(x0, x1, y0, y1, first)
            return

        half = count // 2
        if axis == 0:
            column_weights = [
                sum(weights[iy * g.nx + ix] for iy in range(y0, y1)) for ix in range(x0, x1)
            ]
            cut = x0 + _balanced_split(column_weights)
            split(x0, cut, y0, y1, first, half, 1)
            split(cut, x1, y0, y1, first + half, half, 1)
        else:
            row_weights = [
                sum(weights[iy * g.nx + ix] for ix in range(x0, x1)) for iy in range(y0, y1)
            ]
            cut = y0 + _balanced_split(row_weights)
            split(x0, x1, y0, cut, first, half, 0)
            split(x0, x1, cut, y1, first + half, half, 0)

    split(0, g.nx, 0, g.ny, 0, num_shards, 0)
    return PlacementMap(shard_of=tuple(shard_of), num_shards=num_shards)


def build_random_placement(g: GridConfig, num_shards: int, seed: int = 0) -> PlacementMap:
    """Uniformly random shard per cell, the locality-blind baseline."""
    if num_shards < 1:
        raise InvalidShardCount(f"shard count must be positive, got {num_shards}")
    rng = np.random.default_rng(seed)
    shard_of = rng.integers(0, num_shards, size=g.num_cells)
    return PlacementMap(shard_of=tuple(int(s) for s in shard_of), num_shards=num_shards)


def cell_weights_from_points(g: GridConfig, points: Iterable[Point]) -> list[float]:
    """Count of points per cell, used as KD placement weights."""
    weights = [0.0] * g.num_cells
    for pt in points:
        weights[cell_of(g, pt)] += 1.0
    return weights
