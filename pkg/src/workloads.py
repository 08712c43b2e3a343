"""Movement models for the benchmarks: uniform random walk, Gaussian hotspots, road network.

Every actor owns an independent numpy generator spawned from the workload seed, so the same
(config, seed) reproduces every trajectory. Emitted coordinates are rounded to micrometers,
the precision of the trace file format.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from apify import Actor

from src.config import WorkloadConfig
from src.errors import InvalidGraph
from src.geometry import envelope_contains
from src.models import Envelope, GridConfig, MovementModel, Point, RoadGraph

COORD_DECIMALS = 6
_QUANTUM = 10**COORD_DECIMALS


@dataclass(slots=True)
class WalkerState:
    """Uniform and Gaussian actors: position plus a persistent heading"""

    position: Point
    heading: float
    speed: float
    since_redraw: float = 0.0


@dataclass(slots=True)
class RoadState:
    """Road-net actor travelling from node `origin` towards node `target`"""

    origin: int
    target: int
    offset: float
    position: Point


def _quantize(v: float, lo: float, hi: float) -> float:
    r = round(v, COORD_DECIMALS)
    if r > hi:
        r = math.floor(hi * _QUANTUM) / _QUANTUM
    if r < lo:
        r = math.ceil(lo * _QUANTUM) / _QUANTUM
    return r


def quantize_point(x: float, y: float, space: Envelope) -> Point:
    return Point(
        x=_quantize(x, space.min.x, space.max.x),
        y=_quantize(y, space.min.y, space.max.y),
    )


def _reflect(v: float, lo: float, hi: float) -> tuple[float, bool]:
    if v > hi:
        return hi - (v - hi), True
    if v < lo:
        return lo + (lo - v), True
    return v, False


def _advance(state: WalkerState, distance: float, space: Envelope) -> Point:
    """Move along the heading, bouncing off the border; stay put if the bounce leaves too."""
    if distance <= 0:
        return state.position
    dx, dy = math.cos(state.heading), math.sin(state.heading)
    x, flip_x = _reflect(state.position.x + dx * distance, space.min.x, space.max.x)
    y, flip_y = _reflect(state.position.y + dy * distance, space.min.y, space.max.y)
    if flip_x:
        dx = -dx
    if flip_y:
        dy = -dy
    if flip_x or flip_y:
        state.heading = math.atan2(dy, dx)

    if not (space.min.x <= x <= space.max.x and space.min.y <= y <= space.max.y):
        return state.position
    state.position = quantize_point(x, y, space)
    return state.position


def _maybe_redraw(state: WalkerState, dt: float, rng: np.random.Generator, period: float | None) -> None:
    if period is None:
        return
    state.since_redraw += dt
    if state.since_redraw >= period:
        state.heading = float(rng.uniform(0.0, 2 * math.pi))
        state.since_redraw = 0.0


def step_uniform(
    state: WalkerState,
    dt: float,
    rng: np.random.Generator,
    space: Envelope,
    redraw_period: float | None = None,
) -> Point:
    """Advance at the actor's own speed along its heading."""
    _maybe_redraw(state, dt, rng, redraw_period)
    return _advance(state, state.speed * dt, space)


def gaussian_speed(pt: Point, hotspots: list[Point], sigma: float, max_speed: float) -> float:
    """Speed grows linearly with the distance to the nearest hotspot, capped at 3 sigma."""
    d = min(pt.distance(h) for h in hotspots)
    return max_speed * min(1.0, d / (3 * sigma))


def step_gaussian(
    state: WalkerState,
    dt: float,
    rng: np.random.Generator,
    hotspots: list[Point],
    sigma: float,
    max_speed: float,
    space: Envelope,
    redraw_period: float | None = None,
) -> Point:
    _maybe_redraw(state, dt, rng, redraw_period)
    state.speed = gaussian_speed(state.position, hotspots, sigma, max_speed)
    return _advance(state, state.speed * dt, space)


def step_roadnet(
    state: RoadState,
    dt: float,
    rng: np.random.Generator,
    g: RoadGraph,
    speed: float,
) -> Point:
    """Follow the road graph at a fixed speed.

    At a junction a random incident edge other than the arrival edge is taken; a dead end
    turns the actor around.
    """
    remaining = speed * dt
    while remaining > 0:
        length = g.nodes[state.origin].distance(g.nodes[state.target])
        left = length - state.offset
        if remaining < left:
            state.offset += remaining
            break
        remaining -= left
        arrived, came_from = state.target, state.origin
        neighbors = g.adjacency[arrived]
        if len(neighbors) == 1:
            nxt = came_from
        else:
            choices = [n for n in neighbors if n != came_from]
            nxt = choices[int(rng.integers(len(choices)))]
        state.origin, state.target, state.offset = arrived, nxt, 0.0

    a, b = g.nodes[state.origin], g.nodes[state.target]
    t = state.offset / a.distance(b)
    state.position = Point(
        x=round(a.x + (b.x - a.x) * t, COORD_DECIMALS),
        y=round(a.y + (b.y - a.y) * t, COORD_DECIMALS),
    )
    return state.position


# Road graph files

def load_road_graph(path: str | Path, space: GridConfig | None = None) -> RoadGraph:
    """Parse a road graph file.

    Format: optional `# space <width_m> <height_m>` header, `N <id> <x> <y>` node lines,
    `E <id1> <id2>` edge lines, `#` comments. With a header and a target `space`, node
    coordinates are scaled from the header's extent into the space.

    Raises:
        InvalidGraph: malformed line, unknown node, zero-length or duplicate edge
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise InvalidGraph(f"cannot read {path}: {e}") from e

    header: tuple[float, float] | None = None
    raw_nodes: dict[int, tuple[float, float]] = {}
    edges: list[tuple[int, int]] = []
    seen_edges: set[tuple[int, int]] = set()
    edge_lines: list[int] = []

    for line_no, line in enumerate(lines, start=1):
        parts = line.split()
        if not parts:
            continue
        try:
            if parts[0] == "#":
                if len(parts) == 4 and parts[1] == "space":
                    header = (float(parts[2]), float(parts[3]))
                    if header[0] <= 0 or header[1] <= 0:
                        raise InvalidGraph("space header needs positive extents", line_no)
                continue
            if parts[0].startswith("#"):
                continue
            if parts[0] == "N" and len(parts) == 4:
                node = int(parts[1])
                if node < 0:
                    raise InvalidGraph(f"negative node id {node}", line_no)
                if node in raw_nodes:
                    raise InvalidGraph(f"duplicate node {node}", line_no)
                x, y = float(parts[2]), float(parts[3])
                if not (math.isfinite(x) and math.isfinite(y)):
                    raise InvalidGraph(f"node {node} has non-finite coordinates", line_no)
                raw_nodes[node] = (x, y)
            elif parts[0] == "E" and len(parts) == 3:
                u, v = int(parts[1]), int(parts[2])
                key = (min(u, v), max(u, v))
                if key in seen_edges:
                    raise InvalidGraph(f"duplicate edge {u} {v}", line_no)
                seen_edges.add(key)
                edges.append((u, v))
                edge_lines.append(line_no)
            else:
                raise InvalidGraph(f"unrecognized line {line.strip()!r}", line_no)
        except ValueError as e:
            raise InvalidGraph(f"cannot parse {line.strip()!r}: {e}", line_no) from e

    for (u, v), line_no in zip(edges, edge_lines):
        for node in (u, v):
            if node not in raw_nodes:
                raise InvalidGraph(f"edge references unknown node {node}", line_no)
        if raw_nodes[u] == raw_nodes[v]:
            raise InvalidGraph(f"edge {u} {v} has zero length", line_no)

    sx = sy = 1.0
    ox = oy = 0.0
    if header is not None and space is not None:
        sx, sy = space.width / header[0], space.height / header[1]
        ox, oy = space.origin.x, space.origin.y
    nodes = {
        node: Point(x=round(ox + x * sx, COORD_DECIMALS), y=round(oy + y * sy, COORD_DECIMALS))
        for node, (x, y) in raw_nodes.items()
    }
    if space is not None:
        for node, pt in nodes.items():
            if not envelope_contains(space.extent, pt):
                raise InvalidGraph(f"node {node} at {pt.as_tuple()} lies outside the space")
    if not edges:
        raise InvalidGraph(f"{path} has no edges")
    return RoadGraph(nodes=nodes, edges=tuple(edges))


def generate_lattice_graph(n: int, space: GridConfig, margin: float = 0.05) -> RoadGraph:
    """n x n lattice of roads spanning the space, inset by `margin` of each side."""
    if n < 2:
        raise InvalidGraph(f"a lattice needs at least 2 nodes per side, got {n}")
    x0 = space.origin.x + margin * space.width
    y0 = space.origin.y + margin * space.height
    step_x = space.width * (1 - 2 * margin) / (n - 1)
    step_y = space.height * (1 - 2 * margin) / (n - 1)
    nodes = {
        iy * n + ix: Point(x=round(x0 + ix * step_x, COORD_DECIMALS), y=round(y0 + iy * step_y, COORD_DECIMALS))
        for iy in range(n)
        for ix in range(n)
    }
    edges = []
    for iy in range(n):
        for ix in range(n):
            node = iy * n + ix
            if ix + 1 < n:
                edges.append((node, node + 1))
            if iy + 1 < n:
                edges.append((node, node + n))
    return RoadGraph(nodes=nodes, edges=tuple(edges))


def write_road_graph(graph: RoadGraph, path: str | Path, space: GridConfig | None = None) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        if space is not None:
            f.write(f"# space {space.width:.6f} {space.height:.6f}\n")
        for node in sorted(graph.nodes):
            pt = graph.nodes[node]
            f.write(f"N {node} {pt.x:.6f} {pt.y:.6f}\n")
        for u, v in graph.edges:
            f.write(f"E {u} {v}\n")
    return path


# Per-actor generators

class MovementGenerator:
    """Owns the movement state and random stream of every actor in a workload."""

    def __init__(self, cfg: WorkloadConfig, grid: GridConfig, graph: RoadGraph | None = None):
        if cfg.model is MovementModel.ROADNET and graph is None:
            raise InvalidGraph("the road network model needs a road graph")
        self.cfg = cfg
        self.grid = grid
        self.space = grid.extent
        self.graph = graph
        children = np.random.SeedSequence(cfg.seed).spawn(cfg.num_actors + 1)
        self._rngs = [np.random.default_rng(child) for child in children[:-1]]
        shared = np.random.default_rng(children[-1])

        self.hotspots: list[Point] = []
        if cfg.model is MovementModel.GAUSSIAN:
            xs = shared.uniform(self.space.min.x, self.space.max.x, size=cfg.hotspots)
            ys = shared.uniform(self.space.min.y, self.space.max.y, size=cfg.hotspots)
            self.hotspots = [quantize_point(x, y, self.space) for x, y in zip(xs, ys)]

        self._walkers: list[WalkerState] = []
        self._roads: list[RoadState] = []
        for rng in self._rngs:
            if cfg.model is MovementModel.ROADNET:
                self._roads.append(self._initial_road_state(rng))
            else:
                self._walkers.append(self._initial_walker(rng))

    @classmethod
    def for_config(cls, cfg: WorkloadConfig, grid: GridConfig | None = None) -> MovementGenerator:
        """Build the generator, loading or generating the road graph when the model needs one."""
        grid = grid or cfg.space
        graph = None
        if cfg.model is MovementModel.ROADNET:
            if cfg.road_file is not None:
                graph = load_road_graph(cfg.road_file, grid)
            else:
                graph = generate_lattice_graph(cfg.road_graph_size, grid)
            Actor.log.info(f"Road graph: {len(graph.nodes)} nodes, {len(graph.edges)} edges")
        return cls(cfg, grid, graph)

    def _initial_walker(self, rng: np.random.Generator) -> WalkerState:
        heading = float(rng.uniform(0.0, 2 * math.pi))
        if self.cfg.model is MovementModel.GAUSSIAN:
            center = self.hotspots[int(rng.integers(len(self.hotspots)))]
            sigma = self.cfg.effective_sigma
            x = float(np.clip(center.x + rng.normal(0.0, sigma), self.space.min.x, self.space.max.x))
            y = float(np.clip(center.y + rng.normal(0.0, sigma), self.space.min.y, self.space.max.y))
            position = quantize_point(x, y, self.space)
            speed = gaussian_speed(position, self.hotspots, sigma, self.cfg.max_speed)
        else:
            x = float(rng.uniform(self.space.min.x, self.space.max.x))
            y = float(rng.uniform(self.space.min.y, self.space.max.y))
            position = quantize_point(x, y, self.space)
            speed = self.cfg.max_speed * (1.0 - float(rng.random()))
        return WalkerState(position=position, heading=heading, speed=speed)

    def _initial_road_state(self, rng: np.random.Generator) -> RoadState:
        assert self.graph is not None
        u, v = self.graph.edges[int(rng.integers(len(self.graph.edges)))]
        if rng.random() < 0.5:
            u, v = v, u
        length = self.graph.nodes[u].distance(self.graph.nodes[v])
        state = RoadState(origin=u, target=v, offset=float(rng.uniform(0.0, length)), position=self.graph.nodes[u])
        step_roadnet(state, 0.0, rng, self.graph, self.cfg.fixed_speed)
        return state

    def __len__(self) -> int:
        return self.cfg.num_actors

    def position(self, actor_index: int) -> Point:
        if self._roads:
            return self._roads[actor_index].position
        return self._walkers[actor_index].position

    def initial_points(self) -> list[Point]:
        return [self.position(i) for i in range(self.cfg.num_actors)]

    def next_point(self, actor_index: int, dt: float | None = None) -> Point:
        """Advance one actor by `dt` simulated seconds (the workload step by default)."""
        dt = self.cfg.step_s if dt is None else dt
        rng = self._rngs[actor_index]
        if self.cfg.model is MovementModel.ROADNET:
            assert self.graph is not None
            return step_roadnet(self._roads[actor_index], dt, rng, self.graph, self.cfg.fixed_speed)
        walker = self._walkers[actor_index]
        if self.cfg.model is MovementModel.GAUSSIAN:
            return step_gaussian(
                walker,
                dt,
                rng,
                self.hotspots,
                self.cfg.effective_sigma,
                self.cfg.max_speed,
                self.space,
                self.cfg.redraw_period_s,
            )
        return step_uniform(walker, dt, rng, self.space, self.cfg.redraw_period_s)
