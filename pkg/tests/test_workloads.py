"""Tests for movement models, road graphs and the per-actor movement generator."""

import math

import numpy as np
import pytest

from src.config import WorkloadConfig
from src.errors import InvalidGraph
from src.models import Envelope, GridConfig, MovementModel, Point, RoadGraph
from src.workloads import (
    MovementGenerator,
    RoadState,
    WalkerState,
    gaussian_speed,
    generate_lattice_graph,
    load_road_graph,
    step_gaussian,
    step_roadnet,
    step_uniform,
    write_road_graph,
)

SPACE = Envelope.of(0, 0, 1000, 1000)


def _distance_to_segment(p: Point, a: Point, b: Point) -> float:
    ap = np.array([p.x - a.x, p.y - a.y])
    ab = np.array([b.x - a.x, b.y - a.y])
    t = float(np.clip(ap @ ab / (ab @ ab), 0.0, 1.0))
    return float(np.linalg.norm(ap - t * ab))


def _distance_to_graph(p: Point, g: RoadGraph) -> float:
    return min(_distance_to_segment(p, g.nodes[u], g.nodes[v]) for u, v in g.edges)


def _workload(model: MovementModel, **kwargs) -> WorkloadConfig:
    return WorkloadConfig(model=model, num_actors=20, space_km2=16, cells=16, seed=3, **kwargs)


class TestStepUniform:
    """Straight-line movement with border reflection."""

    def test_straight_step(self):
        """Test a walker advances along its heading."""
        state = WalkerState(position=Point(x=500, y=500), heading=0.0, speed=10.0)
        assert step_uniform(state, 1.0, np.random.default_rng(0), SPACE) == Point(x=510, y=500)

    def test_reflection_travels_the_excess(self):
        """Test a hop 3 m short of the border bounces back to 7 m inside."""
        state = WalkerState(position=Point(x=997, y=500), heading=0.0, speed=10.0)
        assert step_uniform(state, 1.0, np.random.default_rng(0), SPACE) == Point(x=993, y=500)
        assert math.cos(state.heading) == pytest.approx(-1.0)

    def test_stays_put_when_reflection_leaves_too(self):
        """Test a walker stays put when even the reflected step leaves the space."""
        state = WalkerState(position=Point(x=999, y=500), heading=0.0, speed=2500.0)
        assert step_uniform(state, 1.0, np.random.default_rng(0), SPACE) == Point(x=999, y=500)

    def test_redraw_period_changes_heading(self):
        """Test the heading is redrawn after its period."""
        state = WalkerState(position=Point(x=500, y=500), heading=0.0, speed=1.0)
        step_uniform(state, 1.0, np.random.default_rng(5), SPACE, redraw_period=1.0)
        assert state.heading != 0.0
        assert state.since_redraw == 0.0


class TestStepGaussian:
    """Hotspot-relative speeds."""

    def test_on_hotspot_does_not_move(self):
        """Test an actor on its hotspot has zero speed."""
        hotspot = Point(x=500, y=500)
        state = WalkerState(position=hotspot, heading=1.0, speed=5.0)
        assert step_gaussian(state, 1.0, np.random.default_rng(0), [hotspot], 50.0, 20.0, SPACE) == hotspot
        assert state.speed == 0.0

    def test_speed_capped_beyond_three_sigma(self):
        """Test speed is capped far from every hotspot."""
        assert gaussian_speed(Point(x=400, y=0), [Point(x=0, y=0)], 100.0, 20.0) == 20.0

    def test_speed_monotone_in_distance(self):
        """Test speed never decreases as the distance to the hotspot grows."""
        speeds = [
            gaussian_speed(Point(x=d, y=0), [Point(x=0, y=0)], 100.0, 20.0)
            for d in np.linspace(0, 500, 100)
        ]
        assert all(b >= a for a, b in zip(speeds, speeds[1:]))

    def test_nearest_hotspot_counts(self):
        """Test speed depends on the nearest hotspot."""
        hotspots = [Point(x=0, y=0), Point(x=1000, y=0)]
        assert gaussian_speed(Point(x=950, y=0), hotspots, 100.0, 30.0) == pytest.approx(5.0)


class TestStepRoadnet:
    """Fixed-speed travel along graph edges."""

    LINE = RoadGraph(nodes={0: Point(x=0, y=0), 1: Point(x=100, y=0)}, edges=((0, 1),))

    def test_mid_edge_advance(self):
        """Test a road walker advances along its edge."""
        state = RoadState(origin=0, target=1, offset=10.0, position=Point(x=10, y=0))
        assert step_roadnet(state, 1.0, np.random.default_rng(0), self.LINE, 20.0) == Point(x=30, y=0)

    def test_dead_end_reverses(self):
        """Test an actor reaching a degree-one node turns back with the leftover distance."""
        state = RoadState(origin=0, target=1, offset=90.0, position=Point(x=90, y=0))
        assert step_roadnet(state, 1.0, np.random.default_rng(0), self.LINE, 20.0) == Point(x=90, y=0)
        assert (state.origin, state.target) == (1, 0)

    def test_no_u_turn_at_junctions(self):
        """Test the arrival edge is never taken back at an interior junction."""
        g = RoadGraph(
            nodes={0: Point(x=0, y=0), 1: Point(x=100, y=0), 2: Point(x=200, y=0), 3: Point(x=100, y=100)},
            edges=((0, 1), (1, 2), (1, 3)),
        )
        rng = np.random.default_rng(1)
        for _ in range(50):
            state = RoadState(origin=0, target=1, offset=95.0, position=Point(x=95, y=0))
            step_roadnet(state, 1.0, rng, g, 10.0)
            assert state.origin == 1
            assert state.target in (2, 3)

    def test_points_stay_on_roads(self):
        """Test 10000 steps on a 4x4 lattice never leave the edges."""
        grid = GridConfig(width=4000, height=4000, nx=4, ny=4)
        g = generate_lattice_graph(4, grid)
        rng = np.random.default_rng(2)
        state = RoadState(origin=0, target=1, offset=0.0, position=g.nodes[0])
        for _ in range(10000):
            pt = step_roadnet(state, 3.7, rng, g, 22.0)
            assert _distance_to_graph(pt, g) <= 1e-6


class TestRoadGraphFiles:
    """Road graph parsing, validation and the lattice generator."""

    def test_two_node_file(self, tmp_path):
        """Test a two-node graph file loads."""
        path = tmp_path / "line.graph"
        path.write_text("# a tiny road\nN 0 10 10\nN 1 20 10\nE 0 1\n")
        g = load_road_graph(path)
        assert g.adjacency == {0: (1,), 1: (0,)}

    def test_unknown_node(self, tmp_path):
        """Test an edge to an undeclared node is invalid."""
        path = tmp_path / "bad.graph"
        path.write_text("N 0 10 10\nN 1 20 10\nE 0 7\n")
        with pytest.raises(InvalidGraph) as info:
            load_road_graph(path)
        assert info.value.line_no == 3

    @pytest.mark.parametrize(
        "content,line_no",
        [
            ("N 0 10 10\nN x 20 10\n", 2),
            ("N 0 10 10\nN 1 20 10\nE 0 1\nE 1 0\n", 4),
            ("N 0 10 10\nN 0 20 10\n", 2),
            ("N 0 10 10\nN 1 10 10\nE 0 1\n", 3),
            ("N 0 10 10\nQ 1 2\n", 2),
            ("N 0 nan 10\n", 1),
        ],
    )
    def test_malformed_lines_report_line_numbers(self, tmp_path, content: str, line_no: int):
        """Test malformed graph lines are reported with line numbers."""
        path = tmp_path / "bad.graph"
        path.write_text(content)
        with pytest.raises(InvalidGraph) as info:
            load_road_graph(path)
        assert info.value.line_no == line_no

    def test_no_edges(self, tmp_path):
        """Test a graph without edges is invalid."""
        path = tmp_path / "empty.graph"
        path.write_text("N 0 10 10\n")
        with pytest.raises(InvalidGraph):
            load_road_graph(path)

    def test_missing_file(self, tmp_path):
        """Test a missing graph file raises InvalidGraph."""
        with pytest.raises(InvalidGraph):
            load_road_graph(tmp_path / "nope.graph")

    def test_header_scales_into_space(self, tmp_path):
        """Test a `# space` header maps file coordinates onto the configured space."""
        path = tmp_path / "scaled.graph"
        path.write_text("# space 100 100\nN 0 0 0\nN 1 100 50\nE 0 1\n")
        g = load_road_graph(path, GridConfig(width=4000, height=2000, nx=4, ny=2))
        assert g.nodes[1] == Point(x=4000, y=1000)

    def test_outside_space(self, tmp_path):
        """Test a graph node outside the space is invalid."""
        path = tmp_path / "far.graph"
        path.write_text("N 0 0 0\nN 1 9000 0\nE 0 1\n")
        with pytest.raises(InvalidGraph):
            load_road_graph(path, GridConfig(width=4000, height=4000, nx=4, ny=4))

    def test_lattice_size(self):
        """Test the generated lattice has the requested nodes per side."""
        g = generate_lattice_graph(20, GridConfig(width=10000, height=10000, nx=10, ny=10))
        assert len(g.nodes) == 400
        assert len(g.edges) == 760

    def test_lattice_file_round_trip(self, tmp_path):
        """Test a written lattice loads back with the same counts."""
        space = GridConfig(width=10000, height=10000, nx=10, ny=10)
        path = write_road_graph(generate_lattice_graph(20, space), tmp_path / "lattice.graph", space)
        g = load_road_graph(path, space)
        assert len(g.nodes) == 400
        assert len(g.edges) == 760

    def test_lattice_needs_two_nodes_per_side(self):
        """Test a lattice needs two nodes per side."""
        with pytest.raises(InvalidGraph):
            generate_lattice_graph(1, GridConfig(width=100, height=100, nx=1, ny=1))


class TestMovementGenerator:
    """Seeded per-actor movement streams."""

    @pytest.mark.parametrize("model", list(MovementModel))
    def test_deterministic(self, model: MovementModel):
        """Test the same seed produces the same movement."""
        cfg = _workload(model, road_graph_size=4)
        first = MovementGenerator.for_config(cfg)
        second = MovementGenerator.for_config(cfg)
        assert first.initial_points() == second.initial_points()
        for step in range(50):
            i = step % len(first)
            assert first.next_point(i) == second.next_point(i)

    @pytest.mark.parametrize("model", list(MovementModel))
    def test_points_stay_in_space(self, model: MovementModel):
        """Test generated points stay inside the space."""
        cfg = _workload(model, road_graph_size=4, max_speed=400.0)
        gen = MovementGenerator.for_config(cfg)
        extent = cfg.space.extent
        for pt in gen.initial_points():
            assert extent.min.x <= pt.x <= extent.max.x and extent.min.y <= pt.y <= extent.max.y
        for step in range(2000):
            pt = gen.next_point(step % len(gen))
            assert extent.min.x <= pt.x <= extent.max.x and extent.min.y <= pt.y <= extent.max.y

    def test_seeds_differ(self):
        """Test different seeds produce different movement."""
        a = MovementGenerator.for_config(_workload(MovementModel.UNIFORM))
        b = MovementGenerator.for_config(
            WorkloadConfig(model=MovementModel.UNIFORM, num_actors=20, space_km2=16, cells=16, seed=4)
        )
        assert a.initial_points() != b.initial_points()

    def test_hotspots_only_for_gaussian(self):
        """Test hotspots are drawn for the Gaussian model only."""
        assert MovementGenerator.for_config(_workload(MovementModel.UNIFORM)).hotspots == []
        gaussian = MovementGenerator.for_config(_workload(MovementModel.GAUSSIAN, hotspots=3))
        assert len(gaussian.hotspots) == 3

    def test_roadnet_needs_graph(self):
        """Test the road network model needs a graph."""
        cfg = _workload(MovementModel.ROADNET)
        with pytest.raises(InvalidGraph):
            MovementGenerator(cfg, cfg.space)
