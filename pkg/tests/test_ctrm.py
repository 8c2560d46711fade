"""Timed-roadmap construction tests: schedule, sampling fallbacks, merging."""
import math

import numpy as np
import pytest

from ctrmplan.ctrm import (
    ConstructionIncomplete,
    CtrmParams,
    check_reachability_to_goals,
    construct_ctrms,
    find_compatible_vertex,
    motion_to_point,
    p_biased_schedule,
    random_walk_step,
    sample_next_vertex,
)
from ctrmplan.geometry import AgentSpec, Obstacle, Point2, World, dist, in_free_space, valid_edge
from ctrmplan.instance import ProblemInstance, generate_instance, scenario_config
from ctrmplan.neural import ModelConfig, build_model
from ctrmplan.roadmap import dump_timed

K = 1.0 / 32.0
R = 1.0 / 64.0


def single_agent_instance(start: Point2, goal: Point2, obstacles=()) -> ProblemInstance:
    return ProblemInstance(
        world=World(tuple(obstacles)),
        agents=(AgentSpec(R, K),),
        starts=(start,),
        goals=(goal,),
    )


def test_p_biased_schedule_examples():
    assert p_biased_schedule(0, 64, 0) == 0.0
    # before any pass completes the denominator is t_max
    assert p_biased_schedule(32, 64, 0) == pytest.approx(1 - math.exp(-2.5))
    # at the cap the bias saturates near 1 - e^-5
    assert p_biased_schedule(32, 64, 32) == pytest.approx(1 - math.exp(-5.0))
    assert p_biased_schedule(10, 64, 40) == pytest.approx(1 - math.exp(-5.0 * 10 / 40))


def test_check_reachability():
    inst = single_agent_instance((0.5, 0.5), (0.5, 0.5 + K / 2))
    assert check_reachability_to_goals(inst, 0, [[(0.5, 0.5)]])
    assert check_reachability_to_goals(inst, 0, [[(0.5, 0.5 + K / 2)]])
    far = single_agent_instance((0.5, 0.5), (0.9, 0.5))
    assert not check_reachability_to_goals(far, 0, [[(0.5, 0.5)]])


def test_motion_to_point_clamps():
    p = motion_to_point((0.5, 0.5), 10.0, (1.0, 0.0), K)
    assert p == (0.5 + K, 0.5)
    assert motion_to_point((0.5, 0.5), -3.0, (1.0, 0.0), K) == (0.5, 0.5)
    assert motion_to_point((0.999, 0.5), K, (1.0, 0.0), K) == (1.0, 0.5)


def test_random_walk_within_disc():
    rng = np.random.default_rng(0)
    prev = (0.5, 0.5)
    for _ in range(500):
        p = random_walk_step(prev, K, rng)
        assert dist(prev, p) <= K + 1e-12
    near_wall = (0.001, 0.5)
    for _ in range(200):
        p = random_walk_step(near_wall, K, rng)
        assert 0.0 <= p[0] <= 1.0


def _boxed_world() -> World:
    c = 0.140625  # 1/8 + 1/64: obstacle surfaces tangent to the agent disc
    return World(
        (
            Obstacle((0.5 + c, 0.5), 0.125),
            Obstacle((0.5 - c, 0.5), 0.125),
            Obstacle((0.5, 0.5 + c), 0.125),
            Obstacle((0.5, 0.5 - c), 0.125),
        )
    )


def test_boxed_in_agent_stays_put():
    inst = ProblemInstance(
        world=_boxed_world(),
        agents=(AgentSpec(R, K),),
        starts=((0.5, 0.5),),
        goals=((0.9, 0.9),),
    )
    assert in_free_space((0.5, 0.5), inst.agents[0], inst.world)
    rng = np.random.default_rng(3)
    table = [[(0.5, 0.5)]]
    for _ in range(20):
        p = sample_next_vertex(inst, 1, 0, table, None, CtrmParams(), rng)
        assert p == (0.5, 0.5)


def test_construction_incomplete_warns_and_flags():
    inst = ProblemInstance(
        world=_boxed_world(),
        agents=(AgentSpec(R, K),),
        starts=((0.5, 0.5),),
        goals=((0.9, 0.9),),
    )
    with pytest.warns(ConstructionIncomplete):
        res = construct_ctrms(inst, None, CtrmParams(n_traj=2, t_max=4), np.random.default_rng(0))
    assert not res.complete
    assert res.t_makespan == 0
    # no goal vertices were added
    assert all(v.pos != (0.9, 0.9) for v in res.roadmaps[0].iter_vertices())


def test_single_agent_start_on_goal_trace():
    inst = single_agent_instance((0.5, 0.5), (0.5, 0.5))
    res = construct_ctrms(inst, None, CtrmParams(n_traj=1), np.random.default_rng(1))
    rm = res.roadmaps[0]
    assert res.complete
    assert res.t_makespan == 2
    assert rm.max_t == 2
    assert [v.pos for v in rm.layers[1]][-1] == (0.5, 0.5)  # goal appended at t=1
    assert [v.pos for v in rm.layers[2]] == [(0.5, 0.5)]  # and t=2
    assert rm.vertex_count() == 4  # root, one sample, two goal vertices


def test_single_agent_adjacent_goal_trace():
    inst = single_agent_instance((0.5, 0.5), (0.5 + K / 2, 0.5))
    res = construct_ctrms(inst, None, CtrmParams(n_traj=1), np.random.default_rng(2))
    assert res.complete
    assert res.t_makespan == 2
    goals_at = [t for t, layer in enumerate(res.roadmaps[0].layers) if any(v.pos == inst.goals[0] for v in layer)]
    assert goals_at == [1, 2]


# ------------------------------------------------------- merging


def _merge_fixture(d_q: float, d_p: float, with_r1: bool):
    """Roadmap with layer-1 anchors r0 (and r1); q at t=2 offset d_q from r1.

    Returns (inst, rm, p) where p sits at offset d_p along the same axis.
    Geometry: r1 at x=0.4, r0 at x=0.4+K; q/p at x=0.4+d; all y=0.5.
    """
    start = (0.4, 0.5)
    inst = single_agent_instance(start, (0.9, 0.5))
    from ctrmplan.roadmap import TimedRoadmap

    rm = TimedRoadmap(inst.agents[0], inst.world, start)
    rm.insert((0.4 + K, 0.5), 1)  # r0, reachable from root
    if with_r1:
        rm.insert((0.4, 0.5), 1)  # r1, wait at start
    rm.insert((0.4 + d_q, 0.5), 2)
    p = (0.4 + d_p, 0.5)
    return inst, rm, p


def test_merge_empty_layer_returns_none():
    inst, rm, p = _merge_fixture(K, K, with_r1=False)
    assert find_compatible_vertex(inst, 3, 0, (0.5, 0.5), rm) is None
    assert find_compatible_vertex(inst, 9, 0, (0.5, 0.5), rm) is None


def test_merge_distance_gate():
    delta = K / 10
    inst, rm, p = _merge_fixture(K, K + 2 * delta, with_r1=False)
    assert find_compatible_vertex(inst, 2, 0, p, rm) is None


def test_merge_case1_equal_sets_keeps_smaller_h():
    delta = K / 10
    # both q and p reach only r0; goal lies to the right so larger x wins
    inst, rm, p = _merge_fixture(K / 2, K / 2 + delta / 2, with_r1=False)
    q = rm.layers[2][0]
    old_edges = (list(q.parents), list(q.children))
    got = find_compatible_vertex(inst, 2, 0, p, rm)
    assert got == p  # h(p) < h(q): vertex relocated
    assert q.pos == p
    assert (q.parents, q.children) == old_edges


def test_merge_case1_equal_sets_keeps_existing_when_closer():
    delta = K / 10
    inst, rm, p = _merge_fixture(K / 2 + delta / 2, K / 2, with_r1=False)
    q = rm.layers[2][0]
    q_pos = q.pos
    got = find_compatible_vertex(inst, 2, 0, p, rm)
    assert got == q_pos
    assert q.pos == q_pos


def test_merge_case2_superset_absorbs():
    delta = K / 10
    # q reaches r0 and r1; p is just beyond r1's reach
    inst, rm, p = _merge_fixture(K - delta / 4, K + delta / 4, with_r1=True)
    q = rm.layers[2][0]
    assert len(q.parents) == 2
    got = find_compatible_vertex(inst, 2, 0, p, rm)
    assert got == q.pos
    assert q.pos == (0.4 + K - delta / 4, 0.5)  # unchanged


def test_merge_case3_rewires_to_richer_proposal():
    delta = K / 10
    # q reaches only r0; p also reaches r1
    inst, rm, p = _merge_fixture(K + delta / 4, K - delta / 4, with_r1=True)
    q = rm.layers[2][0]
    assert len(q.parents) == 1
    r0 = rm.layers[1][0]
    r1 = rm.layers[1][1]
    got = find_compatible_vertex(inst, 2, 0, p, rm)
    assert got == p
    assert q.pos == p
    parent_ids = {v.id for v in q.parents}
    assert parent_ids == {r0.id, r1.id}
    assert q in r1.children and q in r0.children  # old edge preserved, new added


def test_merge_result_within_delta():
    rng = np.random.default_rng(7)
    inst = generate_instance(scenario_config("basic", rng_seed=21), np.random.default_rng(21))
    import warnings as _w

    with _w.catch_warnings():
        _w.simplefilter("ignore", ConstructionIncomplete)
        res = construct_ctrms(inst, None, CtrmParams(n_traj=5), np.random.default_rng(5))
    delta = inst.agents[0].max_speed / 10
    rm = res.roadmaps[0]
    hits = 0
    for _ in range(300):
        t = int(rng.integers(1, max(2, rm.max_t)))
        base = rng.uniform(0.1, 0.9, size=2)
        p = (float(base[0]), float(base[1]))
        if not in_free_space(p, inst.agents[0], inst.world):
            continue
        got = find_compatible_vertex(inst, t, 0, p, rm)
        if got is not None:
            hits += 1
            assert dist(got, p) <= delta + 1e-12
    assert hits >= 0  # distance bound is what matters; hit count varies


# ------------------------------------------------------- full construction


@pytest.fixture(scope="module")
def desk_instance():
    return generate_instance(scenario_config("basic", rng_seed=33), np.random.default_rng(33))


def assert_consistent(res, inst):
    for i, rm in enumerate(res.roadmaps):
        agent = inst.agents[i]
        for v in rm.iter_vertices():
            assert in_free_space(v.pos, agent, inst.world), (i, v)
            for w in v.children:
                assert w.t == v.t + 1
                assert valid_edge(v.pos, w.pos, agent, inst.world), (i, v, w)
            for u in v.parents:
                assert u.t == v.t - 1


def test_random_walk_construction_consistent(desk_instance):
    # a pure random walk rarely reaches goals jointly; completion is not
    # asserted here, only structural soundness
    inst = desk_instance
    import warnings as _w

    with _w.catch_warnings():
        _w.simplefilter("ignore", ConstructionIncomplete)
        res = construct_ctrms(inst, None, CtrmParams(n_traj=10), np.random.default_rng(9))
    assert_consistent(res, inst)
    for i, rm in enumerate(res.roadmaps):
        for t, layer in enumerate(rm.layers):
            assert len(layer) <= 10 + 1, (i, t)


def test_goal_layers_present_when_complete():
    # two agents a half-step from their goals: joint reachability is immediate
    inst = ProblemInstance(
        world=World(()),
        agents=(AgentSpec(R, K), AgentSpec(R, K)),
        starts=((0.3, 0.3), (0.7, 0.7)),
        goals=((0.3 + K / 2, 0.3), (0.7, 0.7 - K / 2)),
    )
    res = construct_ctrms(inst, None, CtrmParams(n_traj=3), np.random.default_rng(4))
    assert res.complete
    for i, rm in enumerate(res.roadmaps):
        for t in range(1, res.t_makespan + 1):
            assert any(v.pos == inst.goals[i] for v in rm.layers[t])


def test_learned_construction_consistent_and_deterministic(desk_instance):
    import warnings as _w

    inst = desk_instance
    model = build_model(ModelConfig(), seed=17)
    params = CtrmParams(n_traj=5)
    with _w.catch_warnings():
        _w.simplefilter("ignore", ConstructionIncomplete)
        res1 = construct_ctrms(inst, model, params, np.random.default_rng(11))
        res2 = construct_ctrms(inst, model, params, np.random.default_rng(11))
    assert_consistent(res1, inst)
    assert dump_timed(res1.roadmaps) == dump_timed(res2.roadmaps)
    assert res1.t_makespan == res2.t_makespan


def test_no_random_walk_variant_runs(desk_instance):
    inst = desk_instance
    import warnings as _w

    model = build_model(ModelConfig(), seed=18)
    with _w.catch_warnings():
        _w.simplefilter("ignore", ConstructionIncomplete)
        res = construct_ctrms(
            inst, model, CtrmParams(n_traj=5), np.random.default_rng(13), p_biased_override=1.0
        )
    assert_consistent(res, inst)


def test_params_validation():
    with pytest.raises(ValueError):
        CtrmParams(n_traj=0)
    with pytest.raises(ValueError):
        CtrmParams(t_max=1)
