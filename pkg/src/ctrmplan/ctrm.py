"""Cooperative timed roadmap construction.

Repeatedly rolls a joint location table forward in time, proposing each
agent's next vertex either from the learned sampler or a random walk,
merging proposals into nearby structurally-equivalent vertices, and
stopping a pass once every agent can step onto its goal.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .features import FeatureContext, build_raw_record
from .geometry import Point2, dist, valid_edge
from .instance import ProblemInstance
from .neural import CvaeModel, sample_motion
from .roadmap import TimedRoadmap


class ConstructionIncomplete(RuntimeWarning):
    """No pass reached the goals; the returned roadmaps may be unplannable."""


@dataclass(frozen=True)
class CtrmParams:
    n_traj: int = 25
    t_max: int = 64
    n_retry: int = 3
    gamma: float = 5.0
    reached_bias: float = 0.1
    merge_frac: float = 0.1  # delta = merge_frac * max_speed
    grid_resolution: int = 64

    def __post_init__(self):
        if self.n_traj < 1:
            raise ValueError("n_traj must be at least 1")
        if self.t_max < 2:
            raise ValueError("t_max must be at least 2")


@dataclass
class CtrmResult:
    roadmaps: list[TimedRoadmap]
    t_makespan: int
    complete: bool


def p_biased_schedule(t_now: int, t_max: int, t_makespan: int, gamma: float = 5.0) -> float:
    """1 - exp(-gamma * t_now / denom); before any pass finishes, denom = t_max."""
    denom = t_max if t_makespan == 0 else min(t_max, t_makespan)
    return 1.0 - math.exp(-gamma * t_now / denom)


def check_reachability_to_goals(inst: ProblemInstance, t: int, table: list[list[Point2]]) -> bool:
    """True when every agent sits on its goal or one valid step away."""
    for i, agent in enumerate(inst.agents):
        p = table[i][t]
        g = inst.goals[i]
        if p == g:
            continue
        if not valid_edge(p, g, agent, inst.world):
            return False
    return True


def motion_to_point(prev: Point2, magnitude: float, direction: tuple[float, float], max_speed: float) -> Point2:
    mag = min(max(magnitude, 0.0), max_speed)
    x = prev[0] + mag * direction[0]
    y = prev[1] + mag * direction[1]
    return (min(max(x, 0.0), 1.0), min(max(y, 0.0), 1.0))


def random_walk_step(prev: Point2, max_speed: float, rng: np.random.Generator) -> Point2:
    """Uniform draw from the one-step reachable disc, clamped to the square."""
    r = max_speed * math.sqrt(rng.random())
    theta = rng.random() * 2.0 * math.pi
    x = prev[0] + r * math.cos(theta)
    y = prev[1] + r * math.sin(theta)
    return (min(max(x, 0.0), 1.0), min(max(y, 0.0), 1.0))


def sample_next_vertex(
    inst: ProblemInstance,
    t: int,
    i: int,
    table: list[list[Point2]],
    model: CvaeModel | None,
    params: CtrmParams,
    rng: np.random.Generator,
    t_makespan: int = 0,
    ctx: FeatureContext | None = None,
    fov_cache: dict[int, np.ndarray] | None = None,
    p_biased_override: float | None = None,
) -> Point2:
    """Next location for agent i at timestep t; always returns something valid.

    The biased (learned) proposal fires with a probability that grows along
    the timestep axis, drops to a small constant once the agent is within a
    step of its goal, and falls back to at most n_retry random-walk draws;
    staying put is the final resort.
    """
    agent = inst.agents[i]
    prev = table[i][t - 1]
    goal = inst.goals[i]
    if p_biased_override is not None:
        p_biased = p_biased_override
    elif prev == goal or valid_edge(prev, goal, agent, inst.world):
        p_biased = params.reached_bias
    else:
        p_biased = p_biased_schedule(t - 1, params.t_max, t_makespan, params.gamma)
    if model is not None and ctx is not None and rng.random() < p_biased:
        now = [table[j][t - 1] for j in range(len(table))]
        before = [table[j][t - 2] for j in range(len(table))] if t >= 2 else now
        record = build_raw_record(ctx, now, before, i, model.config.neighbors, fov_cache)
        motion = sample_motion(model, record, rng)
        p = motion_to_point(prev, motion.magnitude, motion.direction, agent.max_speed)
        if valid_edge(prev, p, agent, inst.world):
            return p
    for _ in range(params.n_retry):
        p = random_walk_step(prev, agent.max_speed, rng)
        if valid_edge(prev, p, agent, inst.world):
            return p
    return prev


def find_compatible_vertex(
    inst: ProblemInstance, t: int, i: int, p: Point2, rm: TimedRoadmap, merge_frac: float = 0.1
) -> Point2 | None:
    """Merge proposal p into a nearby layer-t vertex with compatible wiring.

    Candidate parents/children of p are measured against each close vertex:
    identical sets keep the position closer to the goal; a superset absorbs
    the subset (relocating the vertex when p's wiring is richer). None means
    the caller must insert p as genuinely new.
    """
    agent = inst.agents[i]
    world = inst.world
    goal = inst.goals[i]
    delta = agent.max_speed * merge_frac
    if t >= len(rm.layers) or not rm.layers[t]:
        return None
    parents_p = {
        v.id: v for v in rm.layers[t - 1] if valid_edge(v.pos, p, agent, world)
    }
    layer_next = rm.layers[t + 1] if t + 1 < len(rm.layers) else []
    children_p = {v.id: v for v in layer_next if valid_edge(p, v.pos, agent, world)}
    pp, cp = set(parents_p), set(children_p)
    for q in rm.layers[t]:
        if dist(q.pos, p) > delta:
            continue
        pq = {v.id for v in q.parents}
        cq = {v.id for v in q.children}
        if pp == pq and cp == cq:
            if dist(p, goal) < dist(q.pos, goal):
                q.pos = p
            return q.pos
        if pp <= pq and cp <= cq:
            return q.pos
        if pq <= pp and cq <= cp:
            q.pos = p
            have_parents = pq
            for vid, v in parents_p.items():
                if vid not in have_parents:
                    q.parents.append(v)
                    v.children.append(q)
            have_children = cq
            for vid, v in children_p.items():
                if vid not in have_children:
                    q.children.append(v)
                    v.parents.append(q)
            return p
    return None


def construct_ctrms(
    inst: ProblemInstance,
    model: CvaeModel | None,
    params: CtrmParams,
    rng: np.random.Generator,
    p_biased_override: float | None = None,
) -> CtrmResult:
    """Build one timed roadmap per agent by n_traj forward passes.

    model=None plans with pure random walks; p_biased_override pins the
    biased-sampling probability (1.0 recovers the no-random-walk variant).
    """
    n = inst.num_agents
    roadmaps = [
        TimedRoadmap(inst.agents[i], inst.world, inst.starts[i], i) for i in range(n)
    ]
    ctx = None
    if model is not None:
        ctx = FeatureContext.build(inst, params.grid_resolution, model.config.fov_l)
    t_makespan = 0
    complete = False
    for _ in range(params.n_traj):
        table: list[list[Point2]] = [[inst.starts[i]] for i in range(n)]
        for t in range(1, params.t_max):
            fov_cache: dict[int, np.ndarray] = {}
            for i in range(n):
                p = sample_next_vertex(
                    inst, t, i, table, model, params, rng, t_makespan, ctx, fov_cache,
                    p_biased_override,
                )
                q = find_compatible_vertex(inst, t, i, p, roadmaps[i], params.merge_frac)
                if q is None:
                    roadmaps[i].insert(p, t)
                    table[i].append(p)
                else:
                    table[i].append(q)
            if check_reachability_to_goals(inst, t, table):
                t_makespan = max(t + 1, t_makespan)
                complete = True
                break
    for i in range(n):
        for t in range(1, t_makespan + 1):
            roadmaps[i].insert(inst.goals[i], t)
    if not complete:
        warnings.warn("no construction pass reached the goals", ConstructionIncomplete)
    return CtrmResult(roadmaps, t_makespan, complete)
