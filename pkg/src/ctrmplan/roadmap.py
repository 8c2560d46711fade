"""Timed-roadmap DAG plus static baseline roadmap builders (random, grid, square).

A TimedRoadmap stores per-timestep vertex layers with edges only from layer t
to t+1, so it is acyclic by construction.  Static roadmaps are undirected and
get time-expanded lazily by the planner.  Edge candidates are gathered through
a uniform spatial hash bucketed at the agent's per-step reach, which keeps
construction near-linear in the vertex count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import AgentSpec, Point2, World, dist, in_free_space, swept_disc_clear, valid_edge
from .instance import ProblemInstance

SQUARE_DENSITIES = {"low": 50.0, "mid": 75.0, "high": 100.0}


class TimedVertex:
    """One (position, timestep) node; parents live at t-1, children at t+1."""

    __slots__ = ("pos", "t", "id", "parents", "children")

    def __init__(self, pos: Point2, t: int, vid: int):
        self.pos = pos
        self.t = t
        self.id = vid
        self.parents: list[TimedVertex] = []
        self.children: list[TimedVertex] = []

    def __repr__(self) -> str:  # debugging aid
        return f"TimedVertex(id={self.id}, t={self.t}, pos=({self.pos[0]:.4f},{self.pos[1]:.4f}))"


class TimedRoadmap:
    """Per-agent DAG of timed vertices, rooted at (start, 0)."""

    def __init__(self, agent: AgentSpec, world: World, start: Point2, agent_index: int = 0):
        self.agent = agent
        self.world = world
        self.agent_index = agent_index
        root = TimedVertex(start, 0, 0)
        self.layers: list[list[TimedVertex]] = [[root]]
        self._next_id = 1

    @property
    def root(self) -> TimedVertex:
        return self.layers[0][0]

    def layer(self, t: int) -> list[TimedVertex]:
        while len(self.layers) <= t:
            self.layers.append([])
        return self.layers[t]

    def insert(self, p: Point2, t: int) -> TimedVertex:
        """Add vertex (p, t) and wire every feasible edge to layers t-1 and t+1.

        The caller guarantees p is in the owner's free space and t >= 1.
        Duplicate positions create distinct vertices; merging is a concern of
        the construction routine, not the data structure.
        """
        v = TimedVertex(p, t, self._next_id)
        self._next_id += 1
        for u in self.layer(t - 1):
            if valid_edge(u.pos, p, self.agent, self.world):
                u.children.append(v)
                v.parents.append(u)
        if t + 1 < len(self.layers):
            for w in self.layers[t + 1]:
                if valid_edge(p, w.pos, self.agent, self.world):
                    v.children.append(w)
                    w.parents.append(v)
        self.layer(t).append(v)
        return v

    def vertex_count(self) -> int:
        return sum(len(layer) for layer in self.layers)

    def iter_vertices(self):
        for layer in self.layers:
            yield from layer

    @property
    def max_t(self) -> int:
        return len(self.layers) - 1


@dataclass
class StaticRoadmap:
    """Undirected per-agent roadmap: base samples plus this agent's endpoints."""

    points: list[Point2]
    adj: list[list[int]]
    agent_index: int
    base_count: int

    @property
    def start_index(self) -> int:
        return self.base_count

    @property
    def goal_index(self) -> int:
        return self.base_count + 1

    def vertex_count(self) -> int:
        return len(self.points)


def _bucket(p: Point2, k: float) -> tuple[int, int]:
    return (int(p[0] / k), int(p[1] / k))


def build_edges(points: list[Point2], agent: AgentSpec, world: World) -> list[list[int]]:
    """Symmetric adjacency over all pairs reachable in one timestep.

    Buckets are sized to the agent's reach k, so each vertex only probes its
    3x3 bucket neighborhood; every unordered pair is visited exactly once by
    inserting vertices into the hash after their own scan.
    """
    k = agent.max_speed
    adj: list[list[int]] = [[] for _ in points]
    buckets: dict[tuple[int, int], list[int]] = {}
    for idx, p in enumerate(points):
        bx, by = _bucket(p, k)
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for j in buckets.get((bx + dx, by + dy), ()):
                    q = points[j]
                    if dist(p, q) <= k and swept_disc_clear(p, q, agent, world):
                        adj[idx].append(j)
                        adj[j].append(idx)
        buckets.setdefault((bx, by), []).append(idx)
    return adj


def _connect_endpoint(points: list[Point2], adj: list[list[int]], idx: int, agent: AgentSpec, world: World) -> None:
    p = points[idx]
    k = agent.max_speed
    for j, q in enumerate(points):
        if j == idx:
            continue
        if dist(p, q) <= k and swept_disc_clear(p, q, agent, world):
            adj[idx].append(j)
            adj[j].append(idx)


def _with_endpoints(
    base_points: list[Point2],
    base_adj: list[list[int]],
    inst: ProblemInstance,
    agent_index: int,
) -> StaticRoadmap:
    agent = inst.agents[agent_index]
    points = list(base_points) + [inst.starts[agent_index], inst.goals[agent_index]]
    adj = [list(row) for row in base_adj] + [[], []]
    _connect_endpoint(points, adj, len(points) - 2, agent, inst.world)
    _connect_endpoint(points, adj, len(points) - 1, agent, inst.world)
    return StaticRoadmap(points, adj, agent_index, base_count=len(base_points))


def _sample_free(
    agent: AgentSpec,
    world: World,
    rng: np.random.Generator,
    n: int,
    box: tuple[float, float, float, float] | None = None,
    max_attempts: int | None = None,
) -> list[Point2]:
    """Uniform rejection samples from the agent's free space (optionally boxed)."""
    r = agent.radius
    if box is None:
        x0, y0, x1, y1 = r, r, 1.0 - r, 1.0 - r
    else:
        x0, y0, x1, y1 = box
    budget = max_attempts if max_attempts is not None else max(10_000, 200 * n)
    out: list[Point2] = []
    attempts = 0
    while len(out) < n and attempts < budget:
        attempts += 1
        p = (float(rng.uniform(x0, x1)), float(rng.uniform(y0, y1))) if x1 > x0 and y1 > y0 else (x0, y0)
        if in_free_space(p, agent, world):
            out.append(p)
    return out


def _homogeneous(inst: ProblemInstance) -> bool:
    first = inst.agents[0]
    return all(a == first for a in inst.agents)


def build_random(inst: ProblemInstance, n_samples: int, rng: np.random.Generator) -> list[StaticRoadmap]:
    """Uniform free-space samples shared by the fleet, one endpoint view per agent.

    Homogeneous fleets sample and wire the base roadmap once; heterogeneous
    agents get independently sampled bases because their free spaces and step
    reaches differ.
    """
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    if _homogeneous(inst):
        base = _sample_free(inst.agents[0], inst.world, rng, n_samples)
        base_adj = build_edges(base, inst.agents[0], inst.world)
        return [_with_endpoints(base, base_adj, inst, i) for i in range(inst.num_agents)]
    out = []
    for i, agent in enumerate(inst.agents):
        base = _sample_free(agent, inst.world, rng, n_samples)
        base_adj = build_edges(base, agent, inst.world)
        out.append(_with_endpoints(base, base_adj, inst, i))
    return out


def grid_vertices(agent: AgentSpec, world: World, side: int) -> list[Point2]:
    pts = []
    for ix in range(side):
        for iy in range(side):
            p = ((ix + 0.5) / side, (iy + 0.5) / side)
            if in_free_space(p, agent, world):
                pts.append(p)
    return pts


def build_grid(inst: ProblemInstance, side: int) -> list[StaticRoadmap]:
    """Lattice of free cell centers; edge rule decides connectivity from k_i."""
    if side < 2:
        raise ValueError("grid side must be >= 2")
    if _homogeneous(inst):
        base = grid_vertices(inst.agents[0], inst.world, side)
        base_adj = build_edges(base, inst.agents[0], inst.world)
        return [_with_endpoints(base, base_adj, inst, i) for i in range(inst.num_agents)]
    out = []
    for i, agent in enumerate(inst.agents):
        base = grid_vertices(agent, inst.world, side)
        base_adj = build_edges(base, agent, inst.world)
        out.append(_with_endpoints(base, base_adj, inst, i))
    return out


def build_square(
    inst: ProblemInstance, agent_index: int, density: str, rng: np.random.Generator
) -> StaticRoadmap:
    """Per-agent samples boxed to the start-goal diagonal square plus a small margin.

    Sample count is ceil(c * l / k) where l is the start-goal distance and c
    the density coefficient; the box is expanded by k/5 per side and clipped
    to the world.
    """
    c = SQUARE_DENSITIES.get(density)
    if c is None:
        raise ValueError(f"unknown density {density!r}, expected one of {sorted(SQUARE_DENSITIES)}")
    agent = inst.agents[agent_index]
    s, g = inst.starts[agent_index], inst.goals[agent_index]
    k = agent.max_speed
    l = dist(s, g)
    n = math.ceil(c * l / k)
    margin = k / 5.0
    box = (
        max(0.0, min(s[0], g[0]) - margin),
        max(0.0, min(s[1], g[1]) - margin),
        min(1.0, max(s[0], g[0]) + margin),
        min(1.0, max(s[1], g[1]) + margin),
    )
    base = _sample_free(agent, inst.world, rng, n, box=box) if n > 0 else []
    base_adj = build_edges(base, agent, inst.world)
    return _with_endpoints(base, base_adj, inst, agent_index)


def build_square_all(inst: ProblemInstance, density: str, rng: np.random.Generator) -> list[StaticRoadmap]:
    return [build_square(inst, i, density, rng) for i in range(inst.num_agents)]


# --- JSON dump / load (debugging and the plotting component) ---


def dump_static(roadmaps: list[StaticRoadmap]) -> dict:
    agents = []
    for rm in roadmaps:
        edges = sorted(
            (i, j) for i, row in enumerate(rm.adj) for j in row if i < j
        )
        agents.append(
            {
                "points": [[p[0], p[1]] for p in rm.points],
                "edges": [[i, j] for i, j in edges],
                "base_count": rm.base_count,
            }
        )
    return {"kind": "static", "agents": agents}


def load_static(doc: dict) -> list[StaticRoadmap]:
    out = []
    for idx, entry in enumerate(doc["agents"]):
        points = [(float(x), float(y)) for x, y in entry["points"]]
        adj: list[list[int]] = [[] for _ in points]
        for i, j in entry["edges"]:
            adj[i].append(j)
            adj[j].append(i)
        out.append(StaticRoadmap(points, adj, idx, int(entry["base_count"])))
    return out


def dump_timed(roadmaps: list[TimedRoadmap]) -> dict:
    agents = []
    for rm in roadmaps:
        layers = [[[v.pos[0], v.pos[1]] for v in layer] for layer in rm.layers]
        index = {v.id: (t, i) for t, layer in enumerate(rm.layers) for i, v in enumerate(layer)}
        edges = []
        for t, layer in enumerate(rm.layers):
            for i, v in enumerate(layer):
                for child in v.children:
                    edges.append([t, i, index[child.id][1]])
        agents.append({"layers": layers, "edges": edges})
    return {"kind": "timed", "agents": agents}


def load_timed(doc: dict, inst: ProblemInstance) -> list[TimedRoadmap]:
    """Rebuild timed roadmaps from a dump, trusting the stored edges."""
    out = []
    for agent_index, entry in enumerate(doc["agents"]):
        layers_raw = entry["layers"]
        start = (float(layers_raw[0][0][0]), float(layers_raw[0][0][1]))
        rm = TimedRoadmap(inst.agents[agent_index], inst.world, start, agent_index)
        for t, layer in enumerate(layers_raw):
            if t == 0:
                continue
            target = rm.layer(t)
            for x, y in layer:
                v = TimedVertex((float(x), float(y)), t, rm._next_id)
                rm._next_id += 1
                target.append(v)
        for t, i, j in entry["edges"]:
            u = rm.layers[t][i]
            w = rm.layers[t + 1][j]
            u.children.append(w)
            w.parents.append(u)
        out.append(rm)
    return out
