"""Experiment orchestration: demonstrations, sample extraction, benchmarks, ablations.

Everything here is glue around the core modules.  Demonstrations come from
prioritized planning on dense randomly sampled roadmaps; training samples are
re-extracted from those solved instances; the benchmark runner executes a
methods-by-instances matrix and reduces it to per-method aggregates over the
subset of instances every surviving method solved.
"""
from __future__ import annotations

import json
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ctrmplan.ctrm import ConstructionIncomplete, CtrmParams, construct_ctrms
from ctrmplan.features import (
    FeatureContext,
    SampleSet,
    build_raw_record,
    goal_deviation_angle,
    indicator_index,
    sample_weight,
    xi_array,
    NBR_FEAT_DIM,
    SELF_FEAT_DIM,
)
from ctrmplan.instance import (
    ProblemInstance,
    ScenarioConfig,
    generate_instance,
    load_instance,
    save_instance,
)
from ctrmplan.neural import ModelConfig
from ctrmplan.planner import (
    Failure,
    PlanLimits,
    Solution,
    dump_solution,
    final_entry_time,
    load_solution,
    prioritized_planning,
)
from ctrmplan.roadmap import build_grid, build_random, build_square_all

# entropy tags mixed into the seed sequence so each pipeline stage draws from
# its own stream: SeedSequence([master, tag, *indices])
TAG_INSTANCES = 1
TAG_DEMOS = 2
TAG_TRAIN = 3
TAG_EVAL = 4
TAG_ABLATE = 5

ABLATION_VARIANTS = ("full", "no_comm", "no_ind", "no_random_walk")


def seeded_rng(master: int, tag: int, *indices: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master, tag, *indices]))


@dataclass
class Demonstration:
    inst: ProblemInstance
    solution: Solution


@dataclass
class Dataset:
    train: list[Demonstration]
    val: list[Demonstration]

    def __iter__(self):
        yield from self.train
        yield from self.val


def gen_demonstrations(
    n: int,
    scenario_cfg: ScenarioConfig,
    rng: np.random.Generator,
    n_val: int = 0,
    demo_samples: int = 3000,
    limits: PlanLimits | None = None,
    max_attempt_factor: int = 20,
) -> Dataset:
    """Solve fresh instances on dense random roadmaps until n + n_val succeed.

    Instances whose planning fails are dropped and replaced by newly drawn
    ones.  The first n successes become the training split, the rest the
    validation split, so the two never share an instance.
    """
    want = n + n_val
    demos: list[Demonstration] = []
    attempts = 0
    while len(demos) < want:
        attempts += 1
        if attempts > want * max_attempt_factor:
            raise RuntimeError(
                f"gave up after {attempts - 1} attempts with {len(demos)}/{want} demonstrations"
            )
        inst = generate_instance(scenario_cfg, rng)
        roadmaps = build_random(inst, demo_samples, rng)
        result = prioritized_planning(inst, roadmaps, limits)
        if isinstance(result, Failure) or not result.valid:
            continue
        demos.append(Demonstration(inst, result))
    return Dataset(demos[:n], demos[n:])


def extract_training_samples(
    demos: list[Demonstration],
    grid_resolution: int = 64,
    fov_l: int = 11,
    k_neighbors: int = 15,
) -> SampleSet:
    """One sample per (agent, timestep before its final goal entry).

    The condition features are rebuilt from the demonstration positions with
    the same snapshot convention the roadmap construction uses (positions at
    t, history at t - 1).  The target is the motion encoding of the next step,
    weighted by how far it deviates from the straight-to-goal bearing.
    Window vectors are deduplicated across samples and agents.
    """
    fov_rows: list[np.ndarray] = []
    fov_index: dict[bytes, int] = {}

    def intern(vec: np.ndarray) -> int:
        v32 = np.ascontiguousarray(vec, dtype=np.float32)
        key = v32.tobytes()
        idx = fov_index.get(key)
        if idx is None:
            idx = fov_index[key] = len(fov_rows)
            fov_rows.append(v32)
        return idx

    self_feats: list[np.ndarray] = []
    self_idx: list[int] = []
    nbr_feats: list[np.ndarray] = []
    nbr_idx: list[int] = []
    nbr_off = [0]
    ys: list[np.ndarray] = []
    ws: list[float] = []
    inds: list[int] = []

    for demo in demos:
        inst = demo.inst
        ctx = FeatureContext.build(inst, grid_resolution, fov_l)
        paths = demo.solution.paths
        arrival = [final_entry_time(p) for p in paths]
        for t in range(max(arrival)):
            now = [p[t] for p in paths]
            prev = [p[t - 1] for p in paths] if t > 0 else now
            fov_cache: dict[int, np.ndarray] = {}
            for i in range(inst.num_agents):
                if t >= arrival[i]:
                    continue
                rec = build_raw_record(ctx, now, prev, i, k_neighbors, fov_cache)
                step = (paths[i][t + 1][0] - now[i][0], paths[i][t + 1][1] - now[i][1])
                self_feats.append(rec.self_feat)
                self_idx.append(intern(rec.self_fov))
                for row in range(rec.nbr_feat.shape[0]):
                    nbr_feats.append(rec.nbr_feat[row])
                    nbr_idx.append(intern(rec.nbr_fov[row]))
                nbr_off.append(len(nbr_feats))
                ys.append(xi_array(step))
                delta = goal_deviation_angle(now[i], paths[i][t + 1], inst.goals[i])
                ws.append(sample_weight(delta))
                inds.append(indicator_index(now[i], paths[i][t + 1], inst.goals[i]))

    fdim = 2 * fov_l * fov_l
    return SampleSet(
        fov=np.array(fov_rows, dtype=np.float32).reshape(len(fov_rows), fdim),
        self_feat=np.array(self_feats).reshape(len(self_feats), SELF_FEAT_DIM),
        self_fov_idx=np.array(self_idx, dtype=np.int32),
        nbr_feat=np.array(nbr_feats).reshape(len(nbr_feats), NBR_FEAT_DIM),
        nbr_fov_idx=np.array(nbr_idx, dtype=np.int32),
        nbr_off=np.array(nbr_off, dtype=np.int64),
        y=np.array(ys).reshape(len(ys), 3),
        weight=np.array(ws),
        ind_truth=np.array(inds, dtype=np.int8),
        fov_l=fov_l,
    )


def save_dataset(
    ds: Dataset,
    dirpath: str,
    config: dict | None = None,
    samples: tuple[SampleSet, SampleSet] | None = None,
) -> None:
    inst_dir = os.path.join(dirpath, "instances")
    sol_dir = os.path.join(dirpath, "solutions")
    os.makedirs(inst_dir, exist_ok=True)
    os.makedirs(sol_dir, exist_ok=True)
    for idx, demo in enumerate(ds):
        with open(os.path.join(inst_dir, f"inst_{idx:04d}.json"), "w") as fh:
            fh.write(save_instance(demo.inst))
        with open(os.path.join(sol_dir, f"sol_{idx:04d}.json"), "w") as fh:
            json.dump(dump_solution(demo.solution), fh, sort_keys=True)
    if samples is not None:
        save_samples(os.path.join(dirpath, "samples.bin"), *samples)
    manifest = {
        "n_train": len(ds.train),
        "n_val": len(ds.val),
        "config": config or {},
    }
    with open(os.path.join(dirpath, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


_SAMPLE_FIELDS = (
    "fov", "self_feat", "self_fov_idx", "nbr_feat", "nbr_fov_idx",
    "nbr_off", "y", "weight", "ind_truth",
)


def save_samples(path: str, train_ss: SampleSet, val_ss: SampleSet) -> None:
    """Both splits in one file, keyed by split prefix."""
    arrays: dict[str, np.ndarray] = {}
    for prefix, ss in (("train", train_ss), ("val", val_ss)):
        for name in _SAMPLE_FIELDS:
            arrays[f"{prefix}_{name}"] = getattr(ss, name)
        arrays[f"{prefix}_fov_l"] = np.array(ss.fov_l)
    with open(path, "wb") as fh:
        # file handle keeps the literal name (savez appends .npz to paths)
        np.savez_compressed(fh, **arrays)


def load_samples(path: str) -> tuple[SampleSet, SampleSet]:
    with np.load(path) as data:
        out = []
        for prefix in ("train", "val"):
            kwargs = {name: data[f"{prefix}_{name}"] for name in _SAMPLE_FIELDS}
            out.append(SampleSet(fov_l=int(data[f"{prefix}_fov_l"]), **kwargs))
    return out[0], out[1]


def load_dataset(dirpath: str) -> Dataset:
    with open(os.path.join(dirpath, "manifest.json")) as fh:
        manifest = json.load(fh)
    demos = []
    total = manifest["n_train"] + manifest["n_val"]
    for idx in range(total):
        with open(os.path.join(dirpath, "instances", f"inst_{idx:04d}.json")) as fh:
            inst = load_instance(fh.read())
        with open(os.path.join(dirpath, "solutions", f"sol_{idx:04d}.json")) as fh:
            sol = load_solution(json.load(fh))
        demos.append(Demonstration(inst, sol))
    return Dataset(demos[: manifest["n_train"]], demos[manifest["n_train"] :])


@dataclass
class MetricsRecord:
    """One benchmark cell; cost fields stay None unless the cell succeeded."""

    method: str
    instance: str
    success: bool
    agents: int
    roadmap_build_ms: float = 0.0
    planning_ms: float = 0.0
    sum_of_costs: int | None = None
    expanded_nodes: int | None = None
    vertices_per_agent_per_timestep: float | None = None

    def to_json(self) -> dict:
        doc = {
            "record": "metrics",
            "method": self.method,
            "instance": self.instance,
            "success": self.success,
            "agents": self.agents,
            "roadmap_build_ms": self.roadmap_build_ms,
            "planning_ms": self.planning_ms,
        }
        if self.success:
            doc["sum_of_costs"] = self.sum_of_costs
            doc["expanded_nodes"] = self.expanded_nodes
            doc["vertices_per_agent_per_timestep"] = self.vertices_per_agent_per_timestep
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "MetricsRecord":
        return cls(
            method=doc["method"],
            instance=doc["instance"],
            success=bool(doc["success"]),
            agents=int(doc["agents"]),
            roadmap_build_ms=float(doc.get("roadmap_build_ms", 0.0)),
            planning_ms=float(doc.get("planning_ms", 0.0)),
            sum_of_costs=doc.get("sum_of_costs"),
            expanded_nodes=doc.get("expanded_nodes"),
            vertices_per_agent_per_timestep=doc.get("vertices_per_agent_per_timestep"),
        )


@dataclass
class MethodSpec:
    """How to build roadmaps for one benchmark column."""

    name: str
    kind: str  # "ctrm" | "random" | "grid" | "square"
    n_traj: int = 25
    n_samples: int = 3000
    side: int = 33
    density: str = "mid"
    p_biased_override: float | None = None
    model: object | None = None


def _build_roadmaps(spec: MethodSpec, inst: ProblemInstance, rng: np.random.Generator):
    """Returns (roadmaps, vertices per agent per timestep)."""
    if spec.kind == "ctrm":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConstructionIncomplete)
            res = construct_ctrms(
                inst,
                spec.model,
                CtrmParams(n_traj=spec.n_traj),
                rng,
                p_biased_override=spec.p_biased_override,
            )
        rms = res.roadmaps
        vpt = float(np.mean([rm.vertex_count() / (rm.max_t + 1) for rm in rms]))
        return rms, vpt
    if spec.kind == "random":
        rms = build_random(inst, spec.n_samples, rng)
    elif spec.kind == "grid":
        rms = build_grid(inst, spec.side)
    elif spec.kind == "square":
        rms = build_square_all(inst, spec.density, rng)
    else:
        raise ValueError(f"unknown roadmap kind {spec.kind!r}")
    # a static roadmap offers its whole vertex set at every timestep
    vpt = float(np.mean([rm.vertex_count() for rm in rms]))
    return rms, vpt


def run_benchmark(
    instances: list[ProblemInstance],
    methods: list[MethodSpec],
    limits: PlanLimits | None = None,
    master_seed: int = 0,
    timings: bool = False,
    instance_ids: list[str] | None = None,
    seed_tag: int = TAG_EVAL,
    jobs: int = 1,
) -> list[MetricsRecord]:
    """Execute the full methods-by-instances matrix; failures never abort it.

    Each cell draws its own generator from (master_seed, tag, instance index,
    method index), so results are reproducible cell by cell.  Timing fields
    stay 0.0 unless timings is set, keeping default output byte-stable.
    """
    if instance_ids is None:
        instance_ids = [f"i{idx:04d}" for idx in range(len(instances))]

    def run_cell(cell: tuple[int, int]) -> MetricsRecord:
        ii, mi = cell
        inst, spec = instances[ii], methods[mi]
        rng = seeded_rng(master_seed, seed_tag, ii, mi)
        t0 = time.perf_counter()
        rms, vpt = _build_roadmaps(spec, inst, rng)
        t1 = time.perf_counter()
        result = prioritized_planning(inst, rms, limits)
        t2 = time.perf_counter()
        rec = MetricsRecord(
            method=spec.name,
            instance=instance_ids[ii],
            success=isinstance(result, Solution) and result.valid,
            agents=inst.num_agents,
            roadmap_build_ms=(t1 - t0) * 1e3 if timings else 0.0,
            planning_ms=(t2 - t1) * 1e3 if timings else 0.0,
        )
        if rec.success:
            rec.sum_of_costs = result.sum_of_costs
            rec.expanded_nodes = result.expanded_nodes
            rec.vertices_per_agent_per_timestep = vpt
        return rec

    cells = [(ii, mi) for ii in range(len(instances)) for mi in range(len(methods))]
    if jobs > 1:
        # Cells share only read-only state (instances, frozen models), and the
        # executor map keeps output order equal to the sequential one.
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run_cell, cells))
    return [run_cell(cell) for cell in cells]


def aggregate(records: list[MetricsRecord], threshold: float = 0.7) -> dict:
    """Per-method success rates plus cost averages over the common-success set.

    Methods below the success-rate threshold keep their rate but are excluded
    from cost averaging; the remaining methods are averaged over exactly the
    instances all of them solved.
    """
    order: list[str] = []
    per_method: dict[str, list[MetricsRecord]] = {}
    for rec in records:
        if rec.method not in per_method:
            order.append(rec.method)
            per_method[rec.method] = []
        per_method[rec.method].append(rec)

    rates = {
        m: sum(r.success for r in recs) / len(recs) for m, recs in per_method.items()
    }
    surviving = [m for m in order if rates[m] >= threshold]
    if surviving:
        common = set.intersection(
            *(
                {r.instance for r in per_method[m] if r.success}
                for m in surviving
            )
        )
    else:
        common = set()

    out = {"threshold": threshold, "common_success_instances": sorted(common), "methods": {}}
    for m in order:
        recs = per_method[m]
        entry = {
            "instances": len(recs),
            "successes": sum(r.success for r in recs),
            "success_rate": rates[m],
        }
        if m in surviving and common:
            chosen = [r for r in recs if r.instance in common]
            entry["mean_sum_of_costs"] = float(
                np.mean([r.sum_of_costs for r in chosen])
            )
            entry["mean_cost_per_agent"] = float(
                np.mean([r.sum_of_costs / r.agents for r in chosen])
            )
            entry["mean_expanded_per_agent"] = float(
                np.mean([r.expanded_nodes / r.agents for r in chosen])
            )
            entry["mean_vertices_per_agent_per_timestep"] = float(
                np.mean([r.vertices_per_agent_per_timestep for r in chosen])
            )
        out["methods"][m] = entry
    out["excluded"] = [m for m in order if m not in surviving]
    return out


def write_metrics_jsonl(path: str, config: dict, records: list[MetricsRecord]) -> None:
    """First line is the resolved run config, then one metrics record per line."""
    with open(path, "w") as fh:
        fh.write(json.dumps({"record": "config", **config}, sort_keys=True) + "\n")
        for rec in records:
            fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")


def read_metrics_jsonl(path: str) -> tuple[dict, list[MetricsRecord]]:
    config: dict = {}
    records: list[MetricsRecord] = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            if doc.get("record") == "config":
                config = doc
            else:
                records.append(MetricsRecord.from_json(doc))
    return config, records


def variant_model_config(variant: str, base: ModelConfig | None = None) -> ModelConfig:
    """Model configuration used to train a given ablation variant."""
    if variant not in ABLATION_VARIANTS:
        raise ValueError(f"unknown ablation variant {variant!r}")
    base = base or ModelConfig()
    if variant == "no_comm":
        return replace(base, use_comm=False)
    if variant == "no_ind":
        return replace(base, use_ind=False)
    return base  # full and no_random_walk share the full model


def ablation_method(variant: str, models: dict[str, object], n_traj: int = 25) -> MethodSpec:
    if variant not in ABLATION_VARIANTS:
        raise ValueError(f"unknown ablation variant {variant!r}")
    model_key = "full" if variant == "no_random_walk" else variant
    return MethodSpec(
        name=variant,
        kind="ctrm",
        n_traj=n_traj,
        model=models[model_key],
        p_biased_override=1.0 if variant == "no_random_walk" else None,
    )


def run_ablation(
    variant: str,
    suite: list[ProblemInstance],
    models: dict[str, object],
    limits: PlanLimits | None = None,
    master_seed: int = 0,
    n_traj: int = 25,
    timings: bool = False,
    jobs: int = 1,
) -> list[MetricsRecord]:
    """Benchmark one ablation variant over the suite.

    Every variant runs under the same per-instance seed stream, so the only
    differences between their runs are the model and the sampling policy.
    """
    spec = ablation_method(variant, models, n_traj)
    return run_benchmark(
        suite,
        [spec],
        limits,
        master_seed=master_seed,
        timings=timings,
        seed_tag=TAG_ABLATE,
        jobs=jobs,
    )


def gen_instance_suite(
    count: int, scenario_cfg: ScenarioConfig, master_seed: int, tag: int = TAG_INSTANCES
) -> list[ProblemInstance]:
    """Independent instances, one seed stream per index."""
    return [
        generate_instance(scenario_cfg, seeded_rng(master_seed, tag, idx))
        for idx in range(count)
    ]
