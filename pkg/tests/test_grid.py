"""Tests for the grid partition and shard placement."""

import numpy as np
import pytest

from src.errors import InvalidShardCount, OutOfBounds
from src.grid import (
    build_placement,
    build_random_placement,
    cell_of,
    cell_weights_from_points,
    cells_of_envelope,
    cells_of_segment,
)
from src.models import Envelope, GridConfig, PlacementMap, Point, Segment

GRID = GridConfig(width=10000, height=10000, nx=10, ny=10)


def _brute_force_envelope_cells(g: GridConfig, e: Envelope) -> set[int]:
    return {cell for cell in range(g.num_cells) if g.cell_extent(cell).intersects(e)}


def _is_rectangle(g: GridConfig, cells: list[int]) -> bool:
    if not cells:
        return True
    idx = [g.cell_index(c) for c in cells]
    xs = [ix for ix, _ in idx]
    ys = [iy for _, iy in idx]
    width = max(xs) - min(xs) + 1
    height = max(ys) - min(ys) + 1
    return width * height == len(cells)


class TestCellOf:
    """Point to cell routing."""

    def test_row_major_id(self):
        """Test cells are numbered row by row."""
        assert cell_of(GRID, Point(x=1500, y=250)) == 1

    def test_origin(self):
        """Test the origin belongs to cell 0."""
        assert cell_of(GRID, Point(x=0, y=0)) == 0

    def test_max_edge_clamps(self):
        """Test that the far corner of the space belongs to the last cell."""
        assert cell_of(GRID, Point(x=10000, y=10000)) == 99

    def test_half_open_boundary(self):
        """Test that a point on an inner boundary belongs to the upper cell."""
        assert cell_of(GRID, Point(x=1000, y=0)) == 1
        assert cell_of(GRID, Point(x=0, y=1000)) == 10

    def test_outside_space(self):
        """Test a point outside the space raises OutOfBounds."""
        with pytest.raises(OutOfBounds):
            cell_of(GRID, Point(x=-0.1, y=5))

    def test_point_inside_its_cell(self):
        """Test random points land in a cell whose extent contains them."""
        rng = np.random.default_rng(1)
        for x, y in rng.uniform(0, 10000, size=(500, 2)):
            extent = GRID.cell_extent(cell_of(GRID, Point(x=x, y=y)))
            assert extent.min.x <= x <= extent.max.x
            assert extent.min.y <= y <= extent.max.y


class TestCellsOfEnvelope:
    """Range to cell fan-out."""

    def test_interior_envelope(self):
        """Test an envelope strictly inside one cell touches only that cell."""
        assert cells_of_envelope(GRID, Envelope.of(1200, 1200, 1800, 1800)) == {11}

    def test_full_cell_touches_neighbors(self):
        """Test that closed cell boundaries pull in the neighbors."""
        cells = cells_of_envelope(GRID, GRID.cell_extent(11))
        assert cells == {0, 1, 2, 10, 11, 12, 20, 21, 22}

    def test_whole_space(self):
        """Test the full extent covers every cell."""
        assert cells_of_envelope(GRID, GRID.extent) == set(range(100))

    def test_partly_outside_is_clipped(self):
        """Test envelopes sticking out of the space are clipped to it."""
        assert cells_of_envelope(GRID, Envelope.of(-500, -500, 500, 500)) == {0}

    def test_disjoint_envelope(self):
        """Test an envelope outside the space raises OutOfBounds."""
        with pytest.raises(OutOfBounds):
            cells_of_envelope(GRID, Envelope.of(20000, 20000, 21000, 21000))

    def test_matches_brute_force(self):
        """Test random envelopes against a scan over all cells."""
        rng = np.random.default_rng(2)
        for _ in range(200):
            x0, x1 = sorted(rng.uniform(0, 10000, size=2))
            y0, y1 = sorted(rng.uniform(0, 10000, size=2))
            e = Envelope.of(x0, y0, x1, y1)
            assert cells_of_envelope(GRID, e) == _brute_force_envelope_cells(GRID, e)


class TestCellsOfSegment:
    """Supercover traversal of a hop."""

    def test_horizontal_segment(self):
        """Test a horizontal segment visits the cells of its row."""
        seg = Segment(start=Point(x=500, y=500), end=Point(x=2500, y=500))
        assert cells_of_segment(GRID, seg) == {0, 1, 2}

    def test_degenerate_segment(self):
        """Test a zero-length segment visits one cell."""
        pt = Point(x=4321, y=1234)
        assert cells_of_segment(GRID, Segment(start=pt, end=pt)) == {cell_of(GRID, pt)}

    def test_vertical_segment(self):
        """Test a vertical segment visits the cells of its column."""
        seg = Segment(start=Point(x=500, y=500), end=Point(x=500, y=2500))
        assert cells_of_segment(GRID, seg) == {0, 10, 20}

    def test_endpoint_outside(self):
        """Test a segment leaving the space raises OutOfBounds."""
        with pytest.raises(OutOfBounds):
            cells_of_segment(GRID, Segment(start=Point(x=500, y=500), end=Point(x=10500, y=500)))

    def test_covers_dense_sampling(self):
        """Test random segments: every sampled cell and both endpoint cells are reported."""
        rng = np.random.default_rng(4)
        step = GRID.cell_width / 16
        for _ in range(500):
            x0, y0, x1, y1 = rng.uniform(0, 10000, size=4)
            seg = Segment(start=Point(x=x0, y=y0), end=Point(x=x1, y=y1))
            n = max(int(np.hypot(x1 - x0, y1 - y0) / step), 1)
            sampled = {
                cell_of(GRID, Point(x=x0 + (x1 - x0) * t, y=y0 + (y1 - y0) * t))
                for t in np.linspace(0.0, 1.0, n + 1)
            }
            cells = cells_of_segment(GRID, seg)
            assert sampled <= cells
            bbox = Envelope.of(min(x0, x1), min(y0, y1), max(x0, x1), max(y0, y1))
            assert cells <= cells_of_envelope(GRID, bbox)


class TestBuildPlacement:
    """KD split of cells onto shards."""

    def test_single_shard(self):
        """Test one shard owns every cell."""
        placement = build_placement(GRID, 1)
        assert set(placement.shard_of) == {0}

    def test_two_shards_split_columns(self):
        """Test uniform weights put the left five columns on shard 0."""
        placement = build_placement(GRID, 2)
        for cell in range(GRID.num_cells):
            ix, _ = GRID.cell_index(cell)
            assert placement.shard(cell) == (0 if ix < 5 else 1)

    @pytest.mark.parametrize("shards", [3, 6, 0])
    def test_rejects_non_power_of_two(self, shards: int):
        """Test placement refuses shard counts that are not powers of two."""
        with pytest.raises(InvalidShardCount):
            build_placement(GRID, shards)

    def test_rejects_wrong_weight_count(self):
        """Test weights must come one per cell."""
        with pytest.raises(ValueError):
            build_placement(GRID, 2, [1.0] * 5)

    @pytest.mark.parametrize("shards", [2, 4, 8, 16])
    def test_regions_are_rectangles(self, shards: int):
        """Test every shard owns a rectangle of cell indices and every cell is assigned."""
        rng = np.random.default_rng(shards)
        placement = build_placement(GRID, shards, rng.uniform(0, 10, GRID.num_cells).tolist())
        assert len(placement.shard_of) == GRID.num_cells
        for shard in range(shards):
            assert _is_rectangle(GRID, placement.cells_of_shard(shard))

    def test_skewed_weights(self):
        """Test a single heavy cell ends up on a shard whose weight sum stays within the total."""
        weights = [0.0] * GRID.num_cells
        weights[55] = 100.0
        placement = build_placement(GRID, 4, weights)
        sums = [sum(weights[c] for c in placement.cells_of_shard(s)) for s in range(4)]
        assert sum(sums) == pytest.approx(100.0)
        assert all(s <= 100.0 for s in sums)
        assert sorted(sums)[-1] == pytest.approx(100.0)

    def test_more_shards_than_cells(self):
        """Test tiny grids still assign every cell."""
        g = GridConfig(width=100, height=100, nx=1, ny=2)
        placement = build_placement(g, 4)
        assert isinstance(placement, PlacementMap)
        assert len(placement.shard_of) == 2

    def test_weights_from_points(self):
        """Test cell weights count the points in each cell."""
        pts = [Point(x=100, y=100), Point(x=150, y=150), Point(x=9999, y=9999)]
        weights = cell_weights_from_points(GRID, pts)
        assert weights[0] == 2.0
        assert weights[99] == 1.0
        assert sum(weights) == 3.0


class TestRandomPlacement:
    """Locality-blind baseline."""

    def test_deterministic_per_seed(self):
        """Test random placement repeats for the same seed."""
        assert build_random_placement(GRID, 4, seed=7) == build_random_placement(GRID, 4, seed=7)

    def test_shards_in_range(self):
        """Test random placement only uses existing shards."""
        placement = build_random_placement(GRID, 4, seed=1)
        assert all(0 <= s < 4 for s in placement.shard_of)
