"""Prioritized planning over timed or static roadmaps with space-time A*.

Agents are planned one at a time in index order.  Each later agent must avoid
the full trajectories of all earlier agents, including their indefinite
parking at the goal after arrival.  A single search works on two graph
flavors: a timed roadmap (edges already encode the time expansion) and a
static roadmap expanded on the fly with an explicit wait move at every vertex.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from heapq import heappop, heappush

from ctrmplan.geometry import (
    AgentSpec,
    Point2,
    dist,
    in_free_space,
    moving_discs_collide,
    swept_disc_clear,
)
from ctrmplan.gridmap import UNREACHABLE, build_occupancy, cost_to_go, point_to_cell
from ctrmplan.instance import ProblemInstance
from ctrmplan.roadmap import StaticRoadmap, TimedRoadmap

# Slack subtracted before taking the ceiling in the arrival heuristic.  The
# exact remaining-step count is ceil(d/k); float noise can push d/k a hair
# above an integer it equals in real arithmetic, and rounding that up would
# overestimate.  Undershooting by 1e-9 keeps the bound admissible.
_CEIL_SLACK = 1e-9


@dataclass(frozen=True)
class PlanLimits:
    """Resource budget for one planning run."""

    node_budget: int = 2_000_000
    timeout_s: float = 600.0
    horizon_factor: float = 4.0
    grid_resolution: int = 64


@dataclass(frozen=True)
class Failure:
    reason: str  # "exhausted" | "timeout"
    agent_index: int
    expanded_nodes: int


@dataclass
class Solution:
    """Synchronized per-agent paths, all padded to a common final timestep."""

    paths: list[list[Point2]]
    sum_of_costs: int
    makespan: int
    expanded_nodes: int
    valid: bool = True


@dataclass(frozen=True)
class Violation:
    kind: str  # "endpoint" | "obstacle" | "interagent" | "kinematic"
    agents: tuple[int, ...]
    timestep: int


@dataclass
class SearchNode:
    state: object
    g: int
    f: float
    parent: "SearchNode | None"


@dataclass
class SearchOutcome:
    """Result of one space-time search; reason is set iff path is None."""

    path: list[Point2] | None
    expanded: int
    reason: str | None = None


def _steps_heuristic(p: Point2, goal: Point2, max_speed: float) -> int:
    return max(math.ceil(dist(p, goal) / max_speed - _CEIL_SLACK), 0)


class CtrmView:
    """Search view over a timed roadmap: successors are the wired children."""

    def __init__(self, rm: TimedRoadmap, goal: Point2):
        self.rm = rm
        self.goal = goal
        self.horizon = rm.max_t

    def initial(self):
        return self.rm.root

    def successors(self, v):
        return v.children

    def node_pos(self, v) -> Point2:
        return v.pos

    def node_time(self, v) -> int:
        return v.t

    def node_key(self, v):
        return v.id

    def tie_id(self, v) -> int:
        return v.id

    def is_goal(self, v) -> bool:
        return v.pos == self.goal


class StaticView:
    """Time-expanded view of a static roadmap; waiting in place is always a move."""

    def __init__(self, rm: StaticRoadmap, horizon: int):
        self.rm = rm
        self.goal = rm.points[rm.goal_index]
        self.horizon = horizon

    def initial(self):
        return (self.rm.start_index, 0)

    def successors(self, state):
        vi, t = state
        yield (vi, t + 1)
        for vj in self.rm.adj[vi]:
            yield (vj, t + 1)

    def node_pos(self, state) -> Point2:
        return self.rm.points[state[0]]

    def node_time(self, state) -> int:
        return state[1]

    def node_key(self, state):
        return state

    def tie_id(self, state) -> int:
        return state[0]

    def is_goal(self, state) -> bool:
        # position match, not index match: start and goal occupy distinct
        # vertices even when they coincide geometrically
        return state[0] == self.rm.goal_index or self.rm.points[state[0]] == self.goal


class PathConstraints:
    """Earlier agents' trajectories, extended by parking at their final point."""

    def __init__(self, paths: list[list[Point2]], radii: list[float]):
        self.items = [(path, len(path) - 1, r) for path, r in zip(paths, radii)]
        self.makespan = max((len(p) - 1 for p in paths), default=0)

    def move_ok(self, p: Point2, q: Point2, t: int, radius: float) -> bool:
        for path, last, r in self.items:
            pj = path[t] if t < last else path[last]
            qj = path[t + 1] if t + 1 < last else path[last]
            if moving_discs_collide(p, q, radius, pj, qj, r):
                return False
        return True

    def park_ok(self, goal: Point2, t_arrival: int, radius: float) -> bool:
        for t in range(t_arrival, self.makespan):
            if not self.move_ok(goal, goal, t, radius):
                return False
        return True


def space_time_astar(
    agent: AgentSpec,
    graph_view,
    constraints: PathConstraints,
    horizon: int,
    *,
    node_budget: int | None = None,
    deadline: float | None = None,
) -> SearchOutcome:
    """Minimal-arrival-time search to the view's goal under moving-disc constraints.

    A node only counts as the goal if the agent can then sit there without
    conflict through the constraint set's makespan.  Heuristic is the straight
    -line step count ceil(|p - g| / max_speed).  Ties pop larger g first, then
    smaller vertex id.  The heap never holds two entries with an identical
    (f, -g, id) key because g equals the node's timestep, so comparisons stop
    at the key.  Returns reason "exhausted" when the bounded graph holds no
    answer and "timeout" when the wall clock or node budget runs out.
    """
    start = graph_view.initial()
    pos0 = graph_view.node_pos(start)
    root = SearchNode(start, 0, _steps_heuristic(pos0, graph_view.goal, agent.max_speed), None)
    heap = [(root.f, 0, graph_view.tie_id(start), root)]
    seen = {graph_view.node_key(start)}
    expanded = 0
    while heap:
        if deadline is not None and time.monotonic() > deadline:
            return SearchOutcome(None, expanded, "timeout")
        if node_budget is not None and expanded >= node_budget:
            return SearchOutcome(None, expanded, "timeout")
        _, neg_g, _, node = heappop(heap)
        expanded += 1
        g = -neg_g
        pos = graph_view.node_pos(node.state)
        if graph_view.is_goal(node.state) and constraints.park_ok(pos, g, agent.radius):
            path = []
            cur = node
            while cur is not None:
                path.append(graph_view.node_pos(cur.state))
                cur = cur.parent
            path.reverse()
            return SearchOutcome(path, expanded, None)
        if g >= horizon:
            continue
        for nxt in graph_view.successors(node.state):
            key = graph_view.node_key(nxt)
            if key in seen:
                continue
            npos = graph_view.node_pos(nxt)
            if not constraints.move_ok(pos, npos, g, agent.radius):
                continue
            seen.add(key)
            h = _steps_heuristic(npos, graph_view.goal, agent.max_speed)
            child = SearchNode(nxt, g + 1, g + 1 + h, node)
            heappush(heap, (child.f, -(g + 1), graph_view.tie_id(nxt), child))
    return SearchOutcome(None, expanded, "exhausted")


def grid_makespan_bound(inst: ProblemInstance, resolution: int = 64) -> int:
    """Coarse lower-ish bound on makespan from per-agent grid distances.

    Each agent's 4-connected hop count from start cell to goal cell converts
    to timesteps via hops / (resolution * max_speed); agents whose endpoints
    fall in occupied or disconnected cells fall back to the straight-line step
    count.  The instance bound is the max over agents, at least 1.
    """
    grids = {}
    bound = 1
    for agent, s, g in zip(inst.agents, inst.starts, inst.goals):
        grid = grids.get(agent.radius)
        if grid is None:
            grid = grids[agent.radius] = build_occupancy(inst.world, agent, resolution)
        field_ = cost_to_go(grid, g, force_free_goal=True)
        hops = int(field_.cells[point_to_cell(s, resolution)])
        if hops == UNREACHABLE:
            steps = _steps_heuristic(s, g, agent.max_speed)
        else:
            steps = math.ceil(hops / (resolution * agent.max_speed) - _CEIL_SLACK)
        bound = max(bound, steps)
    return bound


def prioritized_planning(
    inst: ProblemInstance,
    roadmaps: list[TimedRoadmap] | list[StaticRoadmap],
    limits: PlanLimits | None = None,
) -> Solution | Failure:
    """Plan agents in ascending index order, each avoiding all earlier paths.

    Timed roadmaps bound the search by their own final layer; static roadmaps
    get a horizon of horizon_factor times the grid makespan bound.  The first
    agent whose search fails decides the failure reason.  On success every
    path is padded with goal repeats to the longest arrival and the result is
    validated in place (Solution.valid).
    """
    if limits is None:
        limits = PlanLimits()
    deadline = time.monotonic() + limits.timeout_s
    if isinstance(roadmaps[0], TimedRoadmap):
        views = [CtrmView(rm, inst.goals[i]) for i, rm in enumerate(roadmaps)]
    else:
        horizon = math.ceil(
            limits.horizon_factor * grid_makespan_bound(inst, limits.grid_resolution)
        )
        views = [StaticView(rm, horizon) for rm in roadmaps]
    planned: list[list[Point2]] = []
    radii: list[float] = []
    total = 0
    for i, agent in enumerate(inst.agents):
        constraints = PathConstraints(planned, radii)
        out = space_time_astar(
            agent,
            views[i],
            constraints,
            views[i].horizon,
            node_budget=limits.node_budget - total,
            deadline=deadline,
        )
        total += out.expanded
        if out.path is None:
            return Failure(out.reason, i, total)
        planned.append(out.path)
        radii.append(agent.radius)
    makespan = max(len(p) - 1 for p in planned)
    paths = [p + [p[-1]] * (makespan - (len(p) - 1)) for p in planned]
    sol = Solution(paths, 0, makespan, total)
    sol.sum_of_costs = sum_of_costs(sol)
    sol.valid = not validate_solution(inst, sol)
    return sol


def _position(path: list[Point2], t: int) -> Point2:
    return path[t] if t < len(path) else path[-1]


def validate_solution(inst: ProblemInstance, solution: Solution) -> list[Violation]:
    """Check all four path conditions; returns one record per violation.

    Conditions: endpoints match the instance, every swept step clears the
    obstacles and walls, no two agents' discs ever interpenetrate, and no
    step exceeds the agent's per-timestep speed.  Paths shorter than the
    longest one are treated as parked at their final point.  Step violations
    carry the timestep at which the motion starts.
    """
    paths = solution.paths
    found: dict[Violation, None] = {}
    for i, (path, agent) in enumerate(zip(paths, inst.agents)):
        if path[0] != inst.starts[i]:
            found.setdefault(Violation("endpoint", (i,), 0))
        if path[-1] != inst.goals[i]:
            found.setdefault(Violation("endpoint", (i,), len(path) - 1))
        for t, p in enumerate(path):
            if not in_free_space(p, agent, inst.world):
                found.setdefault(Violation("obstacle", (i,), t))
        for t in range(len(path) - 1):
            p, q = path[t], path[t + 1]
            if dist(p, q) > agent.max_speed:
                found.setdefault(Violation("kinematic", (i,), t))
            if not swept_disc_clear(p, q, agent, inst.world):
                found.setdefault(Violation("obstacle", (i,), t))
    horizon = max(len(p) - 1 for p in paths)
    for i in range(len(paths)):
        for j in range(i + 1, len(paths)):
            ri = inst.agents[i].radius
            rj = inst.agents[j].radius
            for t in range(horizon):
                if moving_discs_collide(
                    _position(paths[i], t),
                    _position(paths[i], t + 1),
                    ri,
                    _position(paths[j], t),
                    _position(paths[j], t + 1),
                    rj,
                ):
                    found.setdefault(Violation("interagent", (i, j), t))
    return list(found)


def final_entry_time(path: list[Point2]) -> int:
    """Last timestep at which the path arrives at its final point to stay."""
    goal = path[-1]
    t = len(path) - 1
    while t > 0 and path[t - 1] == goal:
        t -= 1
    return t


def sum_of_costs(solution: Solution) -> int:
    """Sum over agents of the last timestep at which each one enters its goal to stay."""
    return sum(final_entry_time(path) for path in solution.paths)


def dump_solution(result: Solution | Failure, wall_time_ms: float = 0.0) -> dict:
    if isinstance(result, Failure):
        return {
            "success": False,
            "reason": result.reason,
            "agent_index": result.agent_index,
            "expanded_nodes": result.expanded_nodes,
            "wall_time_ms": wall_time_ms,
        }
    return {
        "success": True,
        "paths": [[[p[0], p[1]] for p in path] for path in result.paths],
        "sum_of_costs": result.sum_of_costs,
        "makespan": result.makespan,
        "expanded_nodes": result.expanded_nodes,
        "wall_time_ms": wall_time_ms,
    }


def load_solution(doc: dict) -> Solution | Failure:
    if not doc.get("success", False):
        return Failure(
            str(doc.get("reason", "exhausted")),
            int(doc.get("agent_index", -1)),
            int(doc.get("expanded_nodes", 0)),
        )
    paths = [[(float(p[0]), float(p[1])) for p in path] for path in doc["paths"]]
    return Solution(
        paths,
        int(doc["sum_of_costs"]),
        int(doc["makespan"]),
        int(doc["expanded_nodes"]),
    )
