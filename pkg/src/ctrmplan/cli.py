"""Command-line entry point.

One binary with subcommands covering the whole workflow: instance and
demonstration generation, model training, roadmap construction, planning,
benchmark evaluation, ablations, and validation.  Options resolve in three
layers: built-in defaults, then a JSON config file (--config), then explicit
flags.  Every output file embeds the resolved configuration and seed.

Exit codes: 0 success, 1 operational failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import glob
import json
import os
import sys
import time
import warnings

import numpy as np

from ctrmplan.ctrm import ConstructionIncomplete, CtrmParams, construct_ctrms
from ctrmplan.instance import (
    PROFILES,
    SCENARIO_NAMES,
    ParseError,
    load_instance,
    save_instance,
    scenario_config,
    validate_instance,
)
from ctrmplan.neural import (
    ModelConfig,
    TrainConfig,
    build_model,
    load_model,
    save_model,
    train,
)
from ctrmplan.pipeline import (
    ABLATION_VARIANTS,
    TAG_DEMOS,
    MethodSpec,
    ablation_method,
    aggregate,
    extract_training_samples,
    gen_demonstrations,
    gen_instance_suite,
    load_dataset,
    load_samples,
    run_benchmark,
    save_dataset,
    seeded_rng,
    write_metrics_jsonl,
    TAG_ABLATE,
)
from ctrmplan.planner import (
    Failure,
    PlanLimits,
    Solution,
    dump_solution,
    load_solution,
    prioritized_planning,
    validate_solution,
)
from ctrmplan.roadmap import (
    SQUARE_DENSITIES,
    build_grid,
    build_random,
    build_square_all,
    dump_static,
    dump_timed,
    load_static,
    load_timed,
)


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"config file {path}: expected a JSON object")
    return doc


def _resolve_seed(args: argparse.Namespace, config: dict) -> int:
    """Flag beats config file beats CTRM_PLAN_SEED beats 0."""
    if args.seed is not None:
        return args.seed
    if "seed" in config:
        return int(config["seed"])
    env = os.environ.get("CTRM_PLAN_SEED")
    if env is not None:
        return int(env)
    return 0


def _opt(args: argparse.Namespace, config: dict, name: str, default):
    """One option through the three resolution layers."""
    val = getattr(args, name)
    if val is not None:
        return val
    if name in config:
        return config[name]
    return default


def _write_json(path: str, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)


def _load_instance_file(path: str):
    with open(path) as fh:
        return load_instance(fh.read())


def _load_instance_dir(dirpath: str):
    """All instance JSONs in a directory, sorted by filename; ids are stems."""
    paths = sorted(glob.glob(os.path.join(dirpath, "*.json")))
    instances, ids = [], []
    for p in paths:
        try:
            instances.append(_load_instance_file(p))
        except ParseError:
            continue  # skip non-instance JSON living in the same directory
        ids.append(os.path.splitext(os.path.basename(p))[0])
    if not instances:
        raise FileNotFoundError(f"no instance files found in {dirpath}")
    return instances, ids


def _limits(args: argparse.Namespace, config: dict) -> tuple[PlanLimits, dict]:
    node_budget = int(_opt(args, config, "node_budget", PlanLimits.node_budget))
    timeout_s = float(_opt(args, config, "timeout_s", PlanLimits.timeout_s))
    horizon_factor = float(_opt(args, config, "horizon_factor", PlanLimits.horizon_factor))
    limits = PlanLimits(node_budget=node_budget, timeout_s=timeout_s, horizon_factor=horizon_factor)
    cfg = {"node_budget": node_budget, "timeout_s": timeout_s, "horizon_factor": horizon_factor}
    return limits, cfg


def _aggregate_path(out: str, explicit: str | None) -> str:
    if explicit is not None:
        return explicit
    stem, _ = os.path.splitext(out)
    return stem + ".aggregate.json"


def parse_method_token(token: str, model_path: str | None, parser: argparse.ArgumentParser) -> MethodSpec:
    """Turn "ctrm-25" / "random-3000" / "grid-33" / "square-mid" into a spec."""
    kind, _, param = token.partition("-")
    if kind == "ctrm":
        if model_path is None:
            parser.error(f"method {token!r} needs --model")
        return MethodSpec(name=token, kind="ctrm", n_traj=int(param or 25), model=load_model(model_path))
    if kind == "random":
        return MethodSpec(name=token, kind="random", n_samples=int(param or 3000))
    if kind == "grid":
        return MethodSpec(name=token, kind="grid", side=int(param or 33))
    if kind == "square":
        if param not in SQUARE_DENSITIES:
            parser.error(f"method {token!r}: density must be one of {tuple(SQUARE_DENSITIES)}")
        return MethodSpec(name=token, kind="square", density=param)
    parser.error(f"unknown method {token!r}")
    raise AssertionError("unreachable")


def cmd_gen_instances(args: argparse.Namespace) -> int:
    config = _load_config_file(args.config)
    seed = _resolve_seed(args, config)
    scenario = _opt(args, config, "scenario", "basic")
    profile = _opt(args, config, "profile", "desk")
    count = int(_opt(args, config, "count", 10))
    resolved = {"command": "gen-instances", "scenario": scenario, "profile": profile,
                "count": count, "seed": seed}
    cfg = scenario_config(scenario, profile, rng_seed=seed)
    os.makedirs(args.out, exist_ok=True)
    suite = gen_instance_suite(count, cfg, seed)
    for idx, inst in enumerate(suite):
        path = os.path.join(args.out, f"i{idx:04d}.json")
        with open(path, "w") as fh:
            fh.write(save_instance(inst, extra={"config": {**resolved, "index": idx}}))
    print(f"wrote {len(suite)} instances to {args.out}")
    return 0


def cmd_gen_demos(args: argparse.Namespace) -> int:
    config = _load_config_file(args.config)
    seed = _resolve_seed(args, config)
    scenario = _opt(args, config, "scenario", "basic")
    profile = _opt(args, config, "profile", "desk")
    count = int(_opt(args, config, "count", 50))
    n_val = int(_opt(args, config, "val", 10))
    demo_samples = int(_opt(args, config, "samples", 3000))
    fov_l = int(_opt(args, config, "fov_l", 11))
    k_neighbors = int(_opt(args, config, "k_neighbors", 15))
    grid_resolution = int(_opt(args, config, "grid_resolution", 64))
    resolved = {"command": "gen-demos", "scenario": scenario, "profile": profile,
                "count": count, "val": n_val, "samples": demo_samples,
                "fov_l": fov_l, "k_neighbors": k_neighbors,
                "grid_resolution": grid_resolution, "seed": seed}
    cfg = scenario_config(scenario, profile, rng_seed=seed)
    rng = seeded_rng(seed, TAG_DEMOS)
    ds = gen_demonstrations(count, cfg, rng, n_val=n_val, demo_samples=demo_samples)
    train_ss = extract_training_samples(ds.train, grid_resolution, fov_l, k_neighbors)
    val_ss = extract_training_samples(ds.val, grid_resolution, fov_l, k_neighbors)
    save_dataset(ds, args.out, config=resolved, samples=(train_ss, val_ss))
    print(f"wrote {len(ds.train)}+{len(ds.val)} demonstrations "
          f"({train_ss.size}+{val_ss.size} samples) to {args.out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = _load_config_file(args.config)
    seed = _resolve_seed(args, config)
    model_cfg = ModelConfig(
        fov_l=int(_opt(args, config, "fov_l", 11)),
        env_dim=int(_opt(args, config, "env_dim", 32)),
        msg_dim=int(_opt(args, config, "msg_dim", 32)),
        attn_dim=int(_opt(args, config, "attn_dim", 10)),
        latent_dim=int(_opt(args, config, "latent_dim", 64)),
        hidden_dim=int(_opt(args, config, "hidden_dim", 32)),
        neighbors=int(_opt(args, config, "neighbors", 15)),
        use_comm=(not args.no_comm) if args.no_comm else bool(config.get("use_comm", True)),
        use_ind=(not args.no_ind) if args.no_ind else bool(config.get("use_ind", True)),
    )
    train_cfg = TrainConfig(
        epochs=int(_opt(args, config, "epochs", 200)),
        batch_size=int(_opt(args, config, "batch_size", 50)),
        learning_rate=float(_opt(args, config, "learning_rate", 1e-3)),
        kl_weight=float(_opt(args, config, "kl_weight", 0.1)),
        nll_weight=float(_opt(args, config, "nll_weight", 1e-3)),
        gumbel_temperature=float(_opt(args, config, "gumbel_temperature", 1.0)),
        seed=seed,
    )
    resolved = {"command": "train", "dataset": args.dataset, "seed": seed,
                "model": model_cfg.__dict__, "train": train_cfg.__dict__}

    samples_path = os.path.join(args.dataset, "samples.bin")
    manifest_path = os.path.join(args.dataset, "manifest.json")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    stored = manifest.get("config", {})
    reuse = (
        os.path.exists(samples_path)
        and stored.get("fov_l") == model_cfg.fov_l
        and stored.get("k_neighbors") == model_cfg.neighbors
    )
    if reuse:
        train_ss, val_ss = load_samples(samples_path)
    else:
        # stored windows don't match this model's view; re-extract from demos
        ds = load_dataset(args.dataset)
        grid_resolution = int(stored.get("grid_resolution", 64))
        train_ss = extract_training_samples(ds.train, grid_resolution, model_cfg.fov_l, model_cfg.neighbors)
        val_ss = extract_training_samples(ds.val, grid_resolution, model_cfg.fov_l, model_cfg.neighbors)
    if train_ss.size == 0 or val_ss.size == 0:
        print("error: dataset has an empty split", file=sys.stderr)
        return 1

    model = build_model(model_cfg, seed)
    hist = train(model, train_ss, val_ss, train_cfg)
    save_model(model, args.out, train_cfg, extra={"config": resolved})
    print(f"trained {train_cfg.epochs} epochs on {train_ss.size} samples; "
          f"best val loss {hist.best_val_loss:.6f} at epoch {hist.best_epoch}; "
          f"saved {args.out}")
    return 0


def cmd_build_roadmap(args: argparse.Namespace) -> int:
    config = _load_config_file(args.config)
    seed = _resolve_seed(args, config)
    inst = _load_instance_file(args.instance)
    rng = np.random.default_rng(seed)
    resolved = {"command": "build-roadmap", "method": args.method,
                "instance": args.instance, "seed": seed}
    if args.method == "ctrm":
        if args.model is None:
            args._parser.error("--method ctrm needs --model")
        n_traj = int(_opt(args, config, "n_traj", 25))
        resolved["n_traj"] = n_traj
        model = load_model(args.model)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ConstructionIncomplete)
            res = construct_ctrms(inst, model, CtrmParams(n_traj=n_traj), rng)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        doc = dump_timed(res.roadmaps)
        doc.update(t_makespan=res.t_makespan, complete=res.complete)
    elif args.method == "random":
        n_samples = int(_opt(args, config, "samples", 3000))
        resolved["samples"] = n_samples
        doc = dump_static(build_random(inst, n_samples, rng))
    elif args.method == "grid":
        side = int(_opt(args, config, "side", 33))
        resolved["side"] = side
        doc = dump_static(build_grid(inst, side))
    else:  # square
        density = _opt(args, config, "density", "mid")
        resolved["density"] = density
        doc = dump_static(build_square_all(inst, density, rng))
    doc["config"] = resolved
    _write_json(args.out, doc)
    print(f"wrote {doc['kind']} roadmap to {args.out}")
    return 0


def cmd_plan(args: argparse.Namespace) -> int:
    config = _load_config_file(args.config)
    seed = _resolve_seed(args, config)
    inst = _load_instance_file(args.instance)
    with open(args.roadmap) as fh:
        doc = json.load(fh)
    if doc.get("kind") == "timed":
        roadmaps = load_timed(doc, inst)
    elif doc.get("kind") == "static":
        roadmaps = load_static(doc)
    else:
        print(f"error: {args.roadmap} is not a roadmap file", file=sys.stderr)
        return 1
    limits, limits_cfg = _limits(args, config)
    resolved = {"command": "plan", "instance": args.instance,
                "roadmap": args.roadmap, "seed": seed, **limits_cfg}
    t0 = time.perf_counter()
    result = prioritized_planning(inst, roadmaps, limits)
    wall_ms = (time.perf_counter() - t0) * 1e3
    out_doc = dump_solution(result, wall_time_ms=round(wall_ms, 3))
    out_doc["config"] = resolved
    if args.out is not None:
        _write_json(args.out, out_doc)
    if isinstance(result, Failure):
        print(f"Failure: {result.reason} (agent {result.agent_index}, "
              f"{result.expanded_nodes} nodes expanded)")
        return 1
    print(f"solved: sum_of_costs={result.sum_of_costs} makespan={result.makespan} "
          f"expanded={result.expanded_nodes}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = _load_config_file(args.config)
    seed = _resolve_seed(args, config)
    method_names = [
        tok.strip() for tok in _opt(args, config, "methods", "random-3000,grid-33").split(",") if tok.strip()
    ]
    jobs = int(_opt(args, config, "jobs", 1))
    threshold = float(_opt(args, config, "threshold", 0.7))
    timings = bool(args.timings) if args.timings else bool(config.get("timings", False))
    limits, limits_cfg = _limits(args, config)
    methods = [parse_method_token(tok, args.model, args._parser) for tok in method_names]
    instances, ids = _load_instance_dir(args.instances)
    resolved = {"command": "evaluate", "instances": args.instances,
                "methods": method_names, "seed": seed, "jobs": jobs,
                "threshold": threshold, "timings": timings, **limits_cfg}
    records = run_benchmark(
        instances, methods, limits,
        master_seed=seed, timings=timings, instance_ids=ids, jobs=jobs,
    )
    write_metrics_jsonl(args.out, resolved, records)
    agg = aggregate(records, threshold)
    agg_path = _aggregate_path(args.out, args.aggregate_out)
    _write_json(agg_path, {"config": resolved, **agg})
    for name in method_names:
        entry = agg["methods"][name]
        print(f"{name}: success {entry['success_rate']:.2f} "
              f"({entry['successes']}/{entry['instances']})")
    print(f"wrote {len(records)} records to {args.out}, aggregate to {agg_path}")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    config = _load_config_file(args.config)
    seed = _resolve_seed(args, config)
    variants = [
        tok.strip() for tok in _opt(args, config, "variants", ",".join(ABLATION_VARIANTS)).split(",") if tok.strip()
    ]
    for v in variants:
        if v not in ABLATION_VARIANTS:
            args._parser.error(f"unknown variant {v!r}, expected one of {ABLATION_VARIANTS}")
    n_traj = int(_opt(args, config, "n_traj", 25))
    jobs = int(_opt(args, config, "jobs", 1))
    threshold = float(_opt(args, config, "threshold", 0.7))
    timings = bool(args.timings) if args.timings else bool(config.get("timings", False))
    limits, limits_cfg = _limits(args, config)

    models: dict[str, object] = {}
    for variant in variants:
        key = "full" if variant == "no_random_walk" else variant
        if key not in models:
            path = os.path.join(args.models, f"{key}.npz")
            models[key] = load_model(path)

    instances, ids = _load_instance_dir(args.instances)
    resolved = {"command": "ablate", "instances": args.instances,
                "models": args.models, "variants": variants, "n_traj": n_traj,
                "seed": seed, "jobs": jobs, "threshold": threshold,
                "timings": timings, **limits_cfg}
    records = []
    for variant in variants:
        spec = ablation_method(variant, models, n_traj)
        records.extend(run_benchmark(
            instances, [spec], limits,
            master_seed=seed, timings=timings, instance_ids=ids,
            seed_tag=TAG_ABLATE, jobs=jobs,
        ))
    write_metrics_jsonl(args.out, resolved, records)
    agg = aggregate(records, threshold)
    agg_path = _aggregate_path(args.out, args.aggregate_out)
    _write_json(agg_path, {"config": resolved, **agg})
    for variant in variants:
        entry = agg["methods"][variant]
        print(f"{variant}: success {entry['success_rate']:.2f} "
              f"({entry['successes']}/{entry['instances']})")
    print(f"wrote {len(records)} records to {args.out}, aggregate to {agg_path}")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    inst = _load_instance_file(args.instance)
    problems = validate_instance(inst)
    if problems:
        for p in problems:
            print(f"instance: {p}")
        return 1
    if args.solution is None:
        print("instance ok")
        return 0
    with open(args.solution) as fh:
        result = load_solution(json.load(fh))
    if isinstance(result, Failure):
        print(f"solution file records a planning failure: {result.reason}")
        return 1
    violations = validate_solution(inst, result)
    for v in violations:
        print(f"violation: {v.kind} agents={v.agents} t={v.timestep}")
    if violations:
        return 1
    print("solution ok")
    return 0


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--seed", type=int, default=None,
                     help="master seed (default: config file, then $CTRM_PLAN_SEED, then 0)")
    sub.add_argument("--config", default=None, help="JSON config file; flags override it")
    sub.set_defaults(_parser=sub)


def _add_limit_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--node-budget", dest="node_budget", type=int, default=None)
    sub.add_argument("--timeout-s", dest="timeout_s", type=float, default=None)
    sub.add_argument("--horizon-factor", dest="horizon_factor", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctrmplan",
        description="Multi-agent path planning on learned timed roadmaps.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("gen-instances", help="generate a suite of problem instances")
    p.add_argument("--scenario", choices=SCENARIO_NAMES, default=None)
    p.add_argument("--profile", choices=PROFILES, default=None)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)
    p.set_defaults(func=cmd_gen_instances)

    p = subs.add_parser("gen-demos", help="generate planning demonstrations and training samples")
    p.add_argument("--scenario", choices=SCENARIO_NAMES, default=None)
    p.add_argument("--profile", choices=PROFILES, default=None)
    p.add_argument("--count", type=int, default=None, help="training demonstrations")
    p.add_argument("--val", type=int, default=None, help="validation demonstrations")
    p.add_argument("--samples", type=int, default=None, help="roadmap samples per demonstration")
    p.add_argument("--fov-l", dest="fov_l", type=int, default=None)
    p.add_argument("--k-neighbors", dest="k_neighbors", type=int, default=None)
    p.add_argument("--grid-resolution", dest="grid_resolution", type=int, default=None)
    p.add_argument("--out", required=True, help="output dataset directory")
    _add_common(p)
    p.set_defaults(func=cmd_gen_demos)

    p = subs.add_parser("train", help="train the vertex-sampling model on a dataset")
    p.add_argument("--dataset", required=True, help="dataset directory from gen-demos")
    p.add_argument("--out", required=True, help="model checkpoint path")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    p.add_argument("--kl-weight", dest="kl_weight", type=float, default=None)
    p.add_argument("--nll-weight", dest="nll_weight", type=float, default=None)
    p.add_argument("--gumbel-temperature", dest="gumbel_temperature", type=float, default=None)
    p.add_argument("--fov-l", dest="fov_l", type=int, default=None)
    p.add_argument("--env-dim", dest="env_dim", type=int, default=None)
    p.add_argument("--msg-dim", dest="msg_dim", type=int, default=None)
    p.add_argument("--attn-dim", dest="attn_dim", type=int, default=None)
    p.add_argument("--latent-dim", dest="latent_dim", type=int, default=None)
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int, default=None)
    p.add_argument("--neighbors", type=int, default=None)
    p.add_argument("--no-comm", dest="no_comm", action="store_true", default=None,
                   help="train without the neighbor-communication feature")
    p.add_argument("--no-ind", dest="no_ind", action="store_true", default=None,
                   help="train without the motion-indicator feature")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("build-roadmap", help="build roadmaps for one instance")
    p.add_argument("--method", choices=("ctrm", "random", "grid", "square"), required=True)
    p.add_argument("--instance", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", default=None, help="model checkpoint (ctrm only)")
    p.add_argument("--n-traj", dest="n_traj", type=int, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--side", type=int, default=None)
    p.add_argument("--density", choices=tuple(SQUARE_DENSITIES), default=None)
    _add_common(p)
    p.set_defaults(func=cmd_build_roadmap)

    p = subs.add_parser("plan", help="run prioritized planning on a roadmap file")
    p.add_argument("--instance", required=True)
    p.add_argument("--roadmap", required=True)
    p.add_argument("--out", default=None, help="write the solution JSON here")
    _add_limit_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_plan)

    p = subs.add_parser("evaluate", help="run the benchmark matrix over an instance directory")
    p.add_argument("--instances", required=True, help="directory of instance files")
    p.add_argument("--methods", default=None,
                   help="comma list, e.g. ctrm-25,random-3000,grid-33,square-mid")
    p.add_argument("--model", default=None, help="model checkpoint for ctrm methods")
    p.add_argument("--out", required=True, help="metrics JSONL path")
    p.add_argument("--aggregate-out", dest="aggregate_out", default=None)
    p.add_argument("--threshold", type=float, default=None,
                   help="success-rate floor for the aggregate cost averages")
    p.add_argument("--timings", action="store_true", default=None,
                   help="record wall-clock timings (breaks byte reproducibility)")
    p.add_argument("--jobs", type=int, default=None)
    _add_limit_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = subs.add_parser("ablate", help="run model-variant ablations over an instance directory")
    p.add_argument("--instances", required=True)
    p.add_argument("--models", required=True,
                   help="directory holding full.npz / no_comm.npz / no_ind.npz")
    p.add_argument("--variants", default=None,
                   help=f"comma list from {ABLATION_VARIANTS}")
    p.add_argument("--n-traj", dest="n_traj", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--aggregate-out", dest="aggregate_out", default=None)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--timings", action="store_true", default=None)
    p.add_argument("--jobs", type=int, default=None)
    _add_limit_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_ablate)

    p = subs.add_parser("validate", help="check an instance file, optionally with a solution")
    p.add_argument("--instance", required=True)
    p.add_argument("--solution", default=None)
    p.set_defaults(func=cmd_validate, seed=None, config=None, _parser=p)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ParseError, ValueError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
