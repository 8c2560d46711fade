"""Demonstration generation, sample extraction, and the benchmark matrix."""
import json
import math

import numpy as np
import pytest

from ctrmplan.features import SampleSet, flat_record, sample_weight
from ctrmplan.geometry import AgentSpec, Point2, World
from ctrmplan.instance import ProblemInstance, scenario_config
from ctrmplan.neural import ModelConfig, build_model
from ctrmplan.pipeline import (
    ABLATION_VARIANTS,
    Dataset,
    Demonstration,
    MethodSpec,
    MetricsRecord,
    aggregate,
    ablation_method,
    extract_training_samples,
    gen_demonstrations,
    gen_instance_suite,
    load_dataset,
    read_metrics_jsonl,
    run_ablation,
    run_benchmark,
    save_dataset,
    seeded_rng,
    variant_model_config,
    write_metrics_jsonl,
)
from ctrmplan.planner import PlanLimits, Solution, sum_of_costs, validate_solution
from ctrmplan.roadmap import build_grid

K = 1 / 32
R = 1 / 64

TINY_SCENARIO = scenario_config("no_obstacles", agent_count_range=(2, 2))


def hand_solution(paths):
    sol = Solution([list(p) for p in paths], 0, max(len(p) - 1 for p in paths), 0)
    sol.sum_of_costs = sum_of_costs(sol)
    return sol


def straight_demo(n_steps=3):
    start = (0.25, 0.5)
    goal = (0.25 + n_steps * K, 0.5)
    inst = ProblemInstance(
        world=World(()), agents=(AgentSpec(R, K),), starts=(start,), goals=(goal,)
    )
    path = [(0.25 + i * K, 0.5) for i in range(n_steps + 1)]
    return Demonstration(inst, hand_solution([path]))


def test_gen_demonstrations_splits_and_validates():
    ds = gen_demonstrations(
        2, TINY_SCENARIO, seeded_rng(7, 2), n_val=1
    )
    assert len(ds.train) == 2 and len(ds.val) == 1
    for demo in ds:
        assert demo.solution.valid
        assert validate_solution(demo.inst, demo.solution) == []
    # no instance shared between the splits
    train_starts = {demo.inst.starts for demo in ds.train}
    assert all(demo.inst.starts not in train_starts for demo in ds.val)


def test_gen_demonstrations_is_reproducible():
    a = gen_demonstrations(1, TINY_SCENARIO, seeded_rng(3, 2))
    b = gen_demonstrations(1, TINY_SCENARIO, seeded_rng(3, 2))
    assert a.train[0].inst.starts == b.train[0].inst.starts
    assert a.train[0].solution.paths == b.train[0].solution.paths


def test_extract_counts_and_straight_weights():
    demo = straight_demo(3)
    ds = extract_training_samples([demo])
    # one record per timestep before arrival, none after
    assert ds.size == 3
    assert np.all(ds.weight == 0.0)
    assert np.all(ds.ind_truth == 1)
    # the target is the motion encoding of each unit step
    for s in range(3):
        np.testing.assert_allclose(ds.y[s], [K, 1.0, 0.0], atol=1e-12)


def test_extract_total_is_sum_of_costs():
    ds = gen_demonstrations(2, TINY_SCENARIO, seeded_rng(11, 2))
    samples = extract_training_samples(ds.train)
    want = sum(demo.solution.sum_of_costs for demo in ds.train)
    assert samples.size == want


def test_extract_detour_weight_matches_angle():
    start = (0.3, 0.5)
    goal = (0.3 + 2 * K, 0.5)
    inst = ProblemInstance(
        world=World(()), agents=(AgentSpec(R, K),), starts=(start,), goals=(goal,)
    )
    dodge = (0.3 + K / 2, 0.5 + K / 2)
    path = [start, dodge, goal]
    demo = Demonstration(inst, hand_solution([path]))
    ds = extract_training_samples([demo])
    assert ds.size == 2
    assert ds.weight[0] == pytest.approx(sample_weight(math.pi / 4))
    assert ds.weight[0] > 0.0


def test_extract_dedups_shared_windows():
    # a second agent parked at its goal recurs identically in every snapshot
    start = (0.25, 0.5)
    goal = (0.25 + 3 * K, 0.5)
    parked = (0.75, 0.5)
    inst = ProblemInstance(
        world=World(()),
        agents=(AgentSpec(R, K), AgentSpec(R, K)),
        starts=(start, parked),
        goals=(goal, parked),
    )
    mover = [(0.25 + i * K, 0.5) for i in range(4)]
    demo = Demonstration(inst, hand_solution([mover, [parked] * 4]))
    ds = extract_training_samples([demo])
    assert ds.size == 3  # parked agent contributes no samples
    references = ds.size + len(ds.nbr_fov_idx)
    assert ds.fov.shape[0] <= 4 < references
    # referenced rows reconstruct the raw record layout
    rec = flat_record(ds, 0)
    fdim = ds.fov.shape[1]
    assert rec["x"].shape[0] == 8 + fdim + 2 * (11 + fdim)


def test_dataset_roundtrip(tmp_path):
    ds = gen_demonstrations(
        1, TINY_SCENARIO, seeded_rng(5, 2), n_val=1
    )
    save_dataset(ds, str(tmp_path), config={"scenario": "no_obstacles"})
    back = load_dataset(str(tmp_path))
    assert len(back.train) == 1 and len(back.val) == 1
    for a, b in zip(ds, back):
        assert a.inst.starts == b.inst.starts
        assert a.inst.goals == b.inst.goals
        assert a.solution.paths == b.solution.paths
        assert a.solution.sum_of_costs == b.solution.sum_of_costs


def bench_instances():
    return gen_instance_suite(2, TINY_SCENARIO, master_seed=21)


def bench_methods():
    return [
        MethodSpec(name="random-3000", kind="random", n_samples=3000),
        MethodSpec(name="grid-33", kind="grid", side=33),
    ]


def test_run_benchmark_matrix_and_jsonl(tmp_path):
    instances = bench_instances()
    records = run_benchmark(instances, bench_methods(), master_seed=21)
    assert len(records) == 4
    assert all(r.success for r in records)
    assert all(r.roadmap_build_ms == 0.0 and r.planning_ms == 0.0 for r in records)
    # boundary cells whose centers fall within an agent radius of the walls
    # are dropped, so the grid holds fewer than side**2 vertices
    grid_counts = {
        f"i{ii:04d}": float(np.mean([rm.vertex_count() for rm in build_grid(inst, 33)]))
        for ii, inst in enumerate(instances)
    }
    grid_recs = [r for r in records if r.method == "grid-33"]
    assert all(r.vertices_per_agent_per_timestep == grid_counts[r.instance] for r in grid_recs)
    rand_recs = [r for r in records if r.method == "random-3000"]
    assert all(r.vertices_per_agent_per_timestep == 3000 + 2 for r in rand_recs)

    path = tmp_path / "metrics.jsonl"
    write_metrics_jsonl(str(path), {"seed": 21, "methods": ["random-3000", "grid-33"]}, records)
    config, back = read_metrics_jsonl(str(path))
    assert config["seed"] == 21
    assert back == records
    first = path.read_text().splitlines()[0]
    assert json.loads(first)["record"] == "config"


def test_run_benchmark_is_byte_deterministic(tmp_path):
    instances = bench_instances()
    for name in ("a", "b"):
        records = run_benchmark(instances, bench_methods(), master_seed=21)
        write_metrics_jsonl(str(tmp_path / name), {"seed": 21}, records)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_run_benchmark_parallel_matches_sequential():
    instances = bench_instances()
    seq = run_benchmark(instances, bench_methods(), master_seed=21)
    par = run_benchmark(instances, bench_methods(), master_seed=21, jobs=3)
    assert par == seq


def test_run_benchmark_records_failures_without_metrics():
    instances = bench_instances()
    records = run_benchmark(
        instances,
        [MethodSpec(name="random-3000", kind="random", n_samples=3000)],
        PlanLimits(node_budget=1),
        master_seed=21,
    )
    assert all(not r.success for r in records)
    for r in records:
        doc = r.to_json()
        assert "sum_of_costs" not in doc
        assert "expanded_nodes" not in doc
        assert doc["roadmap_build_ms"] == 0.0


def synthetic_records():
    rows = []
    outcomes = {
        "A": [True, True, True, True],
        "B": [True, True, True, False],
        "C": [True, False, False, False],
    }
    for m, flags in outcomes.items():
        for idx, ok in enumerate(flags):
            rec = MetricsRecord(m, f"i{idx:04d}", ok, agents=2)
            if ok:
                rec.sum_of_costs = 10 * (idx + 1)
                rec.expanded_nodes = 100 * (idx + 1)
                rec.vertices_per_agent_per_timestep = 5.0
            rows.append(rec)
    return rows


def test_aggregate_threshold_and_common_subset():
    agg = aggregate(synthetic_records(), threshold=0.7)
    assert agg["excluded"] == ["C"]
    assert agg["methods"]["C"]["success_rate"] == 0.25
    assert "mean_sum_of_costs" not in agg["methods"]["C"]
    # A and B survive; both solved instances 0..2, B failed 3
    assert agg["common_success_instances"] == ["i0000", "i0001", "i0002"]
    assert agg["methods"]["A"]["mean_sum_of_costs"] == pytest.approx(20.0)
    assert agg["methods"]["B"]["mean_sum_of_costs"] == pytest.approx(20.0)
    assert agg["methods"]["A"]["mean_expanded_per_agent"] == pytest.approx(100.0)
    assert agg["methods"]["A"]["mean_cost_per_agent"] == pytest.approx(10.0)
    assert agg["methods"]["A"]["success_rate"] == 1.0
    assert agg["methods"]["B"]["success_rate"] == 0.75


def test_aggregate_with_no_survivors():
    records = [MetricsRecord("A", "i0000", False, agents=2)]
    agg = aggregate(records, threshold=0.7)
    assert agg["excluded"] == ["A"]
    assert agg["common_success_instances"] == []


def test_variant_model_configs():
    full = variant_model_config("full")
    assert full.use_comm and full.use_ind
    assert not variant_model_config("no_comm").use_comm
    assert not variant_model_config("no_ind").use_ind
    assert variant_model_config("no_random_walk") == full
    with pytest.raises(ValueError):
        variant_model_config("bogus")


def tiny_models():
    cfg = ModelConfig(
        fov_l=3, env_dim=4, msg_dim=4, attn_dim=2, latent_dim=8, hidden_dim=8, neighbors=3
    )
    return {
        "full": build_model(cfg, seed=0),
        "no_comm": build_model(variant_model_config("no_comm", cfg), seed=1),
        "no_ind": build_model(variant_model_config("no_ind", cfg), seed=2),
    }


def test_ablation_methods_wire_models_and_override():
    models = tiny_models()
    spec = ablation_method("no_random_walk", models)
    assert spec.model is models["full"]
    assert spec.p_biased_override == 1.0
    spec = ablation_method("no_comm", models)
    assert spec.model is models["no_comm"]
    assert spec.p_biased_override is None
    with pytest.raises(ValueError):
        ablation_method("bogus", models)


def test_run_ablation_produces_records_per_variant():
    near_goal = ProblemInstance(
        world=World(()),
        agents=(AgentSpec(R, K), AgentSpec(R, K)),
        starts=((0.3, 0.3), (0.7, 0.7)),
        goals=((0.3 + K / 2, 0.3), (0.7, 0.7 - K / 2)),
    )
    models = tiny_models()
    for variant in ABLATION_VARIANTS:
        records = run_ablation(variant, [near_goal], models, n_traj=2, master_seed=9)
        assert len(records) == 1
        assert records[0].method == variant
        again = run_ablation(variant, [near_goal], models, n_traj=2, master_seed=9)
        assert records == again
