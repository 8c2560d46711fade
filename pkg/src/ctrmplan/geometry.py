"""Disc agents in the unit square: world model, local planner, collision predicates.

All positions live in [0, 1]^2.  An agent is a disc of fixed radius that may
translate up to its max speed within one unit timestep.  Obstacles are static
discs.  Every predicate treats tangency as collision-free: only strict
interpenetration counts as a collision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

Point2 = tuple[float, float]


@dataclass(frozen=True)
class AgentSpec:
    """Physical parameters of one agent."""

    radius: float
    max_speed: float

    def __post_init__(self) -> None:
        if self.radius <= 0.0:
            raise ValueError(f"agent radius must be positive, got {self.radius}")
        if self.max_speed <= 0.0:
            raise ValueError(f"agent max_speed must be positive, got {self.max_speed}")


@dataclass(frozen=True)
class Obstacle:
    """Static circular obstacle."""

    center: Point2
    radius: float

    def __post_init__(self) -> None:
        if self.radius <= 0.0:
            raise ValueError(f"obstacle radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class World:
    """Immutable collection of obstacles inside the unit square."""

    obstacles: tuple[Obstacle, ...] = ()


def dist(p: Point2, q: Point2) -> float:
    return math.hypot(q[0] - p[0], q[1] - p[1])


def in_free_space(p: Point2, agent: AgentSpec, world: World) -> bool:
    """True iff the agent disc centered at p fits in the square and clears all obstacles.

    The disc must lie inside [r, 1-r]^2 and keep center distance of at least
    obstacle.radius + r from every obstacle.  Both bounds admit tangency.
    """
    r = agent.radius
    x, y = p
    if x < r or x > 1.0 - r or y < r or y > 1.0 - r:
        return False
    for ob in world.obstacles:
        if math.hypot(x - ob.center[0], y - ob.center[1]) < ob.radius + r:
            return False
    return True


def segment_point_distance(p: Point2, q: Point2, c: Point2) -> float:
    """Euclidean distance from point c to segment pq (handles p == q)."""
    px, py = p
    dx = q[0] - px
    dy = q[1] - py
    seg2 = dx * dx + dy * dy
    if seg2 == 0.0:
        return math.hypot(c[0] - px, c[1] - py)
    u = ((c[0] - px) * dx + (c[1] - py) * dy) / seg2
    if u < 0.0:
        u = 0.0
    elif u > 1.0:
        u = 1.0
    return math.hypot(c[0] - (px + u * dx), c[1] - (py + u * dy))


def swept_disc_clear(p: Point2, q: Point2, agent: AgentSpec, world: World) -> bool:
    """True iff the disc swept along segment pq stays inside the square and off obstacles.

    Degenerates to in_free_space(p) when p == q.  Containment in [r, 1-r]^2 is
    convex, so checking both endpoints covers the whole sweep.
    """
    r = agent.radius
    for x, y in (p, q):
        if x < r or x > 1.0 - r or y < r or y > 1.0 - r:
            return False
    for ob in world.obstacles:
        if segment_point_distance(p, q, ob.center) < ob.radius + r:
            return False
    return True


def valid_edge(p: Point2, q: Point2, agent: AgentSpec, world: World) -> bool:
    """Single-timestep motion feasibility: within speed limit and swept disc clear."""
    if dist(p, q) > agent.max_speed:
        return False
    return swept_disc_clear(p, q, agent, world)


def local_plan(p: Point2, q: Point2, eps: float, agent: AgentSpec, world: World) -> Point2 | None:
    """Linear interpolation (1-eps)*p + eps*q when the move p->q is feasible.

    Returns None when q is out of reach within one timestep or the swept disc
    hits an obstacle or the walls.  Never raises.  eps=0 returns p exactly and
    eps=1 returns q exactly.
    """
    if not valid_edge(p, q, agent, world):
        return None
    if eps == 0.0:
        return p
    if eps == 1.0:
        return q
    return ((1.0 - eps) * p[0] + eps * q[0], (1.0 - eps) * p[1] + eps * q[1])


def moving_discs_collide(
    p1: Point2, q1: Point2, r1: float, p2: Point2, q2: Point2, r2: float
) -> bool:
    """Continuous collision test for two discs moving at constant velocity over one timestep.

    Disc 1 travels p1->q1 and disc 2 travels p2->q2 simultaneously for
    tau in [0, 1].  Relative displacement is affine in tau, so the squared
    distance is a quadratic whose minimum lands either at an endpoint or at the
    unconstrained vertex clamped into [0, 1].  Collision iff the minimum center
    distance is strictly below r1 + r2 (touching is allowed).
    """
    ax = p1[0] - p2[0]
    ay = p1[1] - p2[1]
    bx = (q1[0] - q2[0]) - ax
    by = (q1[1] - q2[1]) - ay
    bb = bx * bx + by * by
    if bb > 0.0:
        tau = -(ax * bx + ay * by) / bb
        if tau < 0.0:
            tau = 0.0
        elif tau > 1.0:
            tau = 1.0
    else:
        tau = 0.0
    mx = ax + tau * bx
    my = ay + tau * by
    min_d2 = mx * mx + my * my
    rsum = r1 + r2
    return min_d2 < rsum * rsum
