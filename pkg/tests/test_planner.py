"""Space-time A*, prioritized planning, validation, and costing.

The search oracle here is a plain breadth-first sweep of the time-expanded
graph: level t holds exactly the states reachable at timestep t, and the
answer is the first level containing a goal state that can also park through
the constraint makespan.  A* must agree on arrival time everywhere.
"""
import json
import math
import time

import numpy as np
import pytest

from ctrmplan.ctrm import CtrmParams, construct_ctrms
from ctrmplan.geometry import AgentSpec, Obstacle, Point2, World, dist
from ctrmplan.instance import ProblemInstance, generate_instance, scenario_config
from ctrmplan.planner import (
    CtrmView,
    Failure,
    PathConstraints,
    PlanLimits,
    Solution,
    StaticView,
    Violation,
    dump_solution,
    grid_makespan_bound,
    load_solution,
    prioritized_planning,
    space_time_astar,
    sum_of_costs,
    validate_solution,
)
from ctrmplan.roadmap import StaticRoadmap, build_grid, build_random

from bfs_oracle import assert_matches_bfs

K = 1 / 32
R = 1 / 64
AGENT = AgentSpec(R, K)
NO_CONSTRAINTS = PathConstraints([], [])


def chain_roadmap(xs, y, start_i, goal_i, agent_index=0):
    """Colinear roadmap with consecutive points adjacent; endpoints go last."""
    interior = [i for i in range(len(xs)) if i not in (start_i, goal_i)]
    order = interior + [start_i, goal_i]
    where = {orig: new for new, orig in enumerate(order)}
    points = [(xs[i], y) for i in order]
    adj = [[] for _ in points]
    for a in range(len(xs) - 1):
        ia, ib = where[a], where[a + 1]
        adj[ia].append(ib)
        adj[ib].append(ia)
    return StaticRoadmap(points, adj, agent_index, len(interior))


def corridor(n=5, start_i=0, goal_i=None, agent_index=0):
    xs = [0.25 + i * K for i in range(n + 1)]
    return chain_roadmap(xs, 0.5, start_i, n if goal_i is None else goal_i, agent_index)


def test_start_equals_goal_single_expansion():
    rm = corridor(n=5, start_i=2, goal_i=2)
    view = StaticView(rm, horizon=10)
    out = space_time_astar(AGENT, view, NO_CONSTRAINTS, 10)
    assert out.path == [view.goal]
    assert out.expanded == 1
    assert out.reason is None


def test_free_corridor_expands_only_the_line():
    view = StaticView(corridor(), horizon=20)
    out = assert_matches_bfs(AGENT, view, NO_CONSTRAINTS, 20)
    assert len(out.path) - 1 == 5
    assert out.expanded == 6
    assert out.path == [(0.25 + i * K, 0.5) for i in range(6)]


def test_blocked_first_edge_forces_one_wait():
    # a prior trajectory sits on the first interior vertex for one step, then
    # clears out along +x well past the goal
    view = StaticView(corridor(), horizon=20)
    blocker = [(0.25 + K, 0.5), (0.25 + K, 0.5), (0.25 + K + 0.3, 0.5)]
    cons = PathConstraints([blocker], [R])
    out = assert_matches_bfs(AGENT, view, cons, 20)
    assert len(out.path) - 1 == 6
    assert out.path[0] == out.path[1] == (0.25, 0.5)


def test_goal_must_be_parkable_through_makespan():
    # goal reachable at t=2, but a prior trajectory sweeps across it at t=6;
    # the planner has to idle nearby and claim the goal afterwards
    rm = corridor(n=5, goal_i=2)
    view = StaticView(rm, horizon=20)
    g = (0.25 + 2 * K, 0.5)
    far = (0.5, 0.8)
    after = (g[0] + 0.3, 0.5)
    crosser = [far] * 6 + [g, after, after]
    cons = PathConstraints([crosser], [R])
    out = assert_matches_bfs(AGENT, view, cons, 20)
    assert len(out.path) - 1 == 7
    assert out.path[-1] == g


def test_horizon_exhausts_search():
    view = StaticView(corridor(), horizon=3)
    out = space_time_astar(AGENT, view, NO_CONSTRAINTS, 3)
    assert out.path is None
    assert out.reason == "exhausted"


def test_node_budget_and_deadline_report_timeout():
    view = StaticView(corridor(), horizon=20)
    out = space_time_astar(AGENT, view, NO_CONSTRAINTS, 20, node_budget=1)
    assert out.path is None and out.reason == "timeout" and out.expanded == 1
    out = space_time_astar(
        AGENT, view, NO_CONSTRAINTS, 20, deadline=time.monotonic() - 1.0
    )
    assert out.path is None and out.reason == "timeout" and out.expanded == 0


def test_arrival_matches_bfs_on_random_static_roadmaps():
    for seed in range(10):
        rng = np.random.default_rng(seed)
        inst = generate_instance(scenario_config("basic", rng_seed=seed), rng)
        roadmaps = build_random(inst, 40, rng)
        view = StaticView(roadmaps[0], horizon=10)
        if seed % 2 == 0:
            cons = NO_CONSTRAINTS
        else:
            # synthetic prior trajectory cutting across the middle
            other = inst.agents[1]
            line = [
                (
                    inst.starts[1][0] + (inst.goals[1][0] - inst.starts[1][0]) * f / 6,
                    inst.starts[1][1] + (inst.goals[1][1] - inst.starts[1][1]) * f / 6,
                )
                for f in range(7)
            ]
            cons = PathConstraints([line], [other.radius])
        assert_matches_bfs(inst.agents[0], view, cons, 10)


def test_arrival_matches_bfs_on_a_timed_roadmap():
    inst = ProblemInstance(
        world=World(()),
        agents=(AgentSpec(R, K), AgentSpec(R, K)),
        starts=((0.3, 0.3), (0.7, 0.7)),
        goals=((0.3 + K / 2, 0.3), (0.7, 0.7 - K / 2)),
    )
    res = construct_ctrms(inst, None, CtrmParams(n_traj=3), np.random.default_rng(4))
    assert res.complete
    for i, rm in enumerate(res.roadmaps):
        view = CtrmView(rm, inst.goals[i])
        assert_matches_bfs(inst.agents[i], view, NO_CONSTRAINTS, view.horizon)


def test_grid_makespan_bound_straight_line():
    inst = ProblemInstance(
        world=World(()),
        agents=(AGENT,),
        starts=((0.25, 0.5),),
        goals=((0.75, 0.5),),
    )
    assert grid_makespan_bound(inst) == 16
    trivial = ProblemInstance(
        world=World(()), agents=(AGENT,), starts=((0.5, 0.5),), goals=((0.5, 0.5),)
    )
    assert grid_makespan_bound(trivial) == 1


def swap_instance():
    xs = [0.25 + i * K for i in range(6)]
    inst = ProblemInstance(
        world=World(()),
        agents=(AgentSpec(R, K), AgentSpec(R, K)),
        starts=((xs[0], 0.5), (xs[5], 0.5)),
        goals=((xs[5], 0.5), (xs[0], 0.5)),
    )
    roadmaps = [
        corridor(start_i=0, goal_i=5, agent_index=0),
        corridor(start_i=5, goal_i=0, agent_index=1),
    ]
    return inst, roadmaps


def test_corridor_swap_fails_exhausted():
    inst, roadmaps = swap_instance()
    result = prioritized_planning(inst, roadmaps)
    assert isinstance(result, Failure)
    assert result.reason == "exhausted"
    assert result.agent_index == 1
    assert result.expanded_nodes > 0


def test_tight_node_budget_fails_timeout():
    inst, roadmaps = swap_instance()
    result = prioritized_planning(inst, roadmaps, PlanLimits(node_budget=3))
    assert isinstance(result, Failure)
    assert result.reason == "timeout"
    assert result.agent_index == 0
    assert result.expanded_nodes == 3


def crossing_instance():
    return ProblemInstance(
        world=World(()),
        agents=(AgentSpec(R, K), AgentSpec(R, K)),
        starts=((0.25, 0.5), (0.5, 0.25)),
        goals=((0.75, 0.5), (0.5, 0.75)),
    )


def test_prioritized_planning_resolves_a_crossing():
    inst = crossing_instance()
    roadmaps = build_grid(inst, 33)
    sol = prioritized_planning(inst, roadmaps)
    assert isinstance(sol, Solution)
    assert sol.valid
    assert validate_solution(inst, sol) == []
    assert sol.expanded_nodes > 0
    assert sol.makespan >= 16
    assert all(len(p) == sol.makespan + 1 for p in sol.paths)
    assert sol.paths[0][0] == inst.starts[0] and sol.paths[0][-1] == inst.goals[0]
    assert sol.sum_of_costs == sum_of_costs(sol)


def test_prioritized_planning_is_deterministic():
    inst = crossing_instance()
    roadmaps = build_grid(inst, 33)
    a = prioritized_planning(inst, roadmaps)
    b = prioritized_planning(inst, roadmaps)
    assert a.paths == b.paths
    assert a.expanded_nodes == b.expanded_nodes


def test_prioritized_planning_on_a_ctrm():
    inst = ProblemInstance(
        world=World(()),
        agents=(AgentSpec(R, K), AgentSpec(R, K)),
        starts=((0.3, 0.3), (0.7, 0.7)),
        goals=((0.3 + K / 2, 0.3), (0.7, 0.7 - K / 2)),
    )
    res = construct_ctrms(inst, None, CtrmParams(n_traj=3), np.random.default_rng(4))
    assert res.complete
    sol = prioritized_planning(inst, res.roadmaps)
    assert isinstance(sol, Solution)
    assert sol.valid
    assert sol.makespan <= res.t_makespan


def hand_solution(paths):
    sol = Solution([list(p) for p in paths], 0, max(len(p) - 1 for p in paths), 0)
    sol.sum_of_costs = sum_of_costs(sol)
    return sol


def test_validate_accepts_a_clean_pair():
    inst = ProblemInstance(
        world=World(()),
        agents=(AgentSpec(R, K), AgentSpec(R, K)),
        starts=((0.25, 0.5), (0.25, 0.25)),
        goals=((0.25 + 2 * K, 0.5), (0.25 + 2 * K, 0.25)),
    )
    sol = hand_solution(
        [
            [(0.25, 0.5), (0.25 + K, 0.5), (0.25 + 2 * K, 0.5)],
            [(0.25, 0.25), (0.25 + K, 0.25), (0.25 + 2 * K, 0.25)],
        ]
    )
    assert validate_solution(inst, sol) == []


def test_validate_flags_a_swap_at_t3():
    a = (0.5, 0.5)
    b = (0.5 + K, 0.5)
    inst = ProblemInstance(
        world=World(()),
        agents=(AgentSpec(R, K), AgentSpec(R, K)),
        starts=(a, b),
        goals=(b, a),
    )
    sol = hand_solution([[a, a, a, a, b], [b, b, b, b, a]])
    assert validate_solution(inst, sol) == [Violation("interagent", (0, 1), 3)]


def test_validate_flags_speed_and_endpoint():
    a = (0.25, 0.5)
    g = (0.25 + 2 * K, 0.5)
    inst = ProblemInstance(world=World(()), agents=(AGENT,), starts=(a,), goals=(g,))
    sol = hand_solution([[a, g]])  # one step of 2k
    assert validate_solution(inst, sol) == [Violation("kinematic", (0,), 0)]
    sol = hand_solution([[g, g]])  # starts in the wrong place
    assert validate_solution(inst, sol) == [Violation("endpoint", (0,), 0)]


def test_validate_flags_obstacle_sweep_and_membership():
    a = (0.25, 0.5)
    g = (0.25 + 2 * K, 0.5)
    wall = World((Obstacle((0.25 + K, 0.5), R),))
    inst = ProblemInstance(world=wall, agents=(AGENT,), starts=(a,), goals=(g,))
    # both steps are legal speeds but the midpoint sits inside the obstacle
    sol = hand_solution([[a, (0.25 + K, 0.5), g]])
    report = validate_solution(inst, sol)
    assert Violation("obstacle", (0,), 1) in report  # vertex inside the disc
    assert Violation("obstacle", (0,), 0) in report  # sweep into it
    assert all(v.kind == "obstacle" for v in report)


def test_validate_extends_short_paths_as_parked():
    a0 = (0.5, 0.5)
    g1_path = [(0.5 + 3 * K, 0.5), (0.5 + 2 * K, 0.5), (0.5 + K, 0.5), (0.5, 0.5)]
    inst = ProblemInstance(
        world=World(()),
        agents=(AgentSpec(R, K), AgentSpec(R, K)),
        starts=(a0, g1_path[0]),
        goals=(a0, g1_path[-1]),
    )
    # agent 0 gives a single-point path; agent 1 walks straight onto it
    sol = hand_solution([[a0], g1_path])
    report = validate_solution(inst, sol)
    assert Violation("interagent", (0, 1), 2) in report


def test_sum_of_costs_rules():
    g = (0.5, 0.5)
    x = (0.5 + K, 0.5)
    assert sum_of_costs(hand_solution([[g], [g, g, g]])) == 0
    arrive4 = [x, x, x, x, g, g, g, g]
    arrive7 = [x, x, x, x, x, x, x, g]
    assert sum_of_costs(hand_solution([arrive4, arrive7])) == 11
    # leaving and coming back: cost counts the final entry
    assert sum_of_costs(hand_solution([[g, x, g, g]])) == 2


def test_solution_roundtrip_through_json():
    inst = crossing_instance()
    sol = prioritized_planning(inst, build_grid(inst, 33))
    doc = json.loads(json.dumps(dump_solution(sol, wall_time_ms=12.5)))
    back = load_solution(doc)
    assert isinstance(back, Solution)
    assert back.paths == sol.paths
    assert back.sum_of_costs == sol.sum_of_costs
    assert back.makespan == sol.makespan
    assert back.expanded_nodes == sol.expanded_nodes
    fail = Failure("exhausted", 1, 44)
    assert load_solution(json.loads(json.dumps(dump_solution(fail)))) == fail
