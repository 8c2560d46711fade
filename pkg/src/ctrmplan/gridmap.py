"""Occupancy grids, BFS cost-to-go fields, and field-of-view window extraction.

The unit square is discretized into L x L cells; cell (ix, iy) covers
[ix/L, (ix+1)/L) x [iy/L, (iy+1)/L) and is probed at its center.  Arrays are
indexed [ix, iy] with ix along the world x axis.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .geometry import AgentSpec, Point2, World

UNREACHABLE = -1


class GoalBlocked(RuntimeError):
    """Raised when a cost-to-go query lands on an occupied goal cell."""


@dataclass(frozen=True)
class OccupancyGrid:
    resolution: int
    cells: np.ndarray  # (L, L) bool, True = occupied for this agent radius

    def __post_init__(self) -> None:
        self.cells.setflags(write=False)


@dataclass(frozen=True)
class CostToGoField:
    cells: np.ndarray  # (L, L) int32 hop counts, UNREACHABLE where cut off

    def __post_init__(self) -> None:
        self.cells.setflags(write=False)


@dataclass(frozen=True)
class FovMaps:
    occupancy: np.ndarray  # (l, l) bool
    closer_to_goal: np.ndarray  # (l, l) bool


def point_to_cell(p: Point2, resolution: int) -> tuple[int, int]:
    ix = min(int(p[0] * resolution), resolution - 1)
    iy = min(int(p[1] * resolution), resolution - 1)
    return max(ix, 0), max(iy, 0)


def cell_center(ix: int, iy: int, resolution: int) -> Point2:
    return ((ix + 0.5) / resolution, (iy + 0.5) / resolution)


def build_occupancy(world: World, agent: AgentSpec, resolution: int) -> OccupancyGrid:
    """Mark cells whose center point fails the agent's free-space test."""
    if resolution < 2:
        raise ValueError(f"grid resolution must be >= 2, got {resolution}")
    centers = (np.arange(resolution) + 0.5) / resolution
    cx, cy = np.meshgrid(centers, centers, indexing="ij")
    r = agent.radius
    occupied = (cx < r) | (cx > 1.0 - r) | (cy < r) | (cy > 1.0 - r)
    for ob in world.obstacles:
        d = np.hypot(cx - ob.center[0], cy - ob.center[1])
        occupied |= d < ob.radius + r
    return OccupancyGrid(resolution, occupied)


def cost_to_go(grid: OccupancyGrid, goal: Point2, force_free_goal: bool = False) -> CostToGoField:
    """4-connected BFS hop distances from the goal's cell over free cells.

    force_free_goal seeds the search even when the goal's cell center happens
    to be occupied (the continuous goal point can be free while its coarse cell
    is not); by default that situation raises GoalBlocked.
    """
    L = grid.resolution
    gx, gy = point_to_cell(goal, L)
    if grid.cells[gx, gy] and not force_free_goal:
        raise GoalBlocked(f"goal cell ({gx},{gy}) is occupied at resolution {L}")
    dists = np.full((L, L), UNREACHABLE, dtype=np.int32)
    dists[gx, gy] = 0
    queue = deque([(gx, gy)])
    occ = grid.cells
    while queue:
        x, y = queue.popleft()
        d = dists[x, y] + 1
        for nx, ny in ((x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)):
            if 0 <= nx < L and 0 <= ny < L and not occ[nx, ny] and dists[nx, ny] == UNREACHABLE:
                dists[nx, ny] = d
                queue.append((nx, ny))
    return CostToGoField(dists)


def extract_fov(grid: OccupancyGrid, field: CostToGoField, center: Point2, l: int) -> FovMaps:
    """l x l occupancy and closer-to-goal windows centered on the agent's cell.

    Out-of-world cells read occupied=True and closer=False.  A cell is closer
    when its hop distance is finite and strictly below the center cell's (an
    unreachable center compares as infinitely far).
    """
    if l % 2 != 1 or l < 1 or l > grid.resolution:
        raise ValueError(f"fov side must be odd and within the grid, got {l}")
    L = grid.resolution
    cx, cy = point_to_cell(center, L)
    half = l // 2
    occ = np.ones((l, l), dtype=bool)
    closer = np.zeros((l, l), dtype=bool)
    x0, x1 = cx - half, cx + half + 1
    y0, y1 = cy - half, cy + half + 1
    sx0, sy0 = max(x0, 0), max(y0, 0)
    sx1, sy1 = min(x1, L), min(y1, L)
    if sx0 < sx1 and sy0 < sy1:
        wx0, wy0 = sx0 - x0, sy0 - y0
        wx1, wy1 = wx0 + (sx1 - sx0), wy0 + (sy1 - sy0)
        occ[wx0:wx1, wy0:wy1] = grid.cells[sx0:sx1, sy0:sy1]
        window = field.cells[sx0:sx1, sy0:sy1]
        center_d = field.cells[cx, cy]
        if center_d == UNREACHABLE:
            closer[wx0:wx1, wy0:wy1] = window != UNREACHABLE
        else:
            closer[wx0:wx1, wy0:wy1] = (window != UNREACHABLE) & (window < center_d)
    return FovMaps(occupancy=occ, closer_to_goal=closer)


def fov_vector(maps: FovMaps) -> np.ndarray:
    """Flatten the two binary windows to one float vector (occupancy first)."""
    return np.concatenate(
        [maps.occupancy.ravel().astype(np.float64), maps.closer_to_goal.ravel().astype(np.float64)]
    )
