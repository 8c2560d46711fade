"""Benchmark a trained sampler against the classical roadmap baselines.

    python3 scripts/evaluate_trend.py --model models/desk_full.npz \
        --methods ctrm-25,random-3000,grid-33,square-mid --out trend.jsonl

Prints the aggregate table (success rate, cost and expansions per agent,
vertices per agent per timestep) and writes the per-run metrics stream.
"""
import argparse
import json
import os
import time

from ctrmplan.cli import parse_method_token
from ctrmplan.instance import scenario_config
from ctrmplan.pipeline import aggregate, gen_instance_suite, run_benchmark, write_metrics_jsonl


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--model", help="sampler checkpoint (needed for ctrm-* methods)")
    ap.add_argument("--methods", default="ctrm-25,random-3000")
    ap.add_argument("--scenario", default="basic")
    ap.add_argument("--instances", type=int, default=24)
    ap.add_argument("--seed", type=int, default=2)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", help="metrics JSONL path")
    args = ap.parse_args()

    methods = [parse_method_token(tok.strip(), args.model, ap)
               for tok in args.methods.split(",") if tok.strip()]
    suite = gen_instance_suite(args.instances, scenario_config(args.scenario, "desk"),
                               master_seed=args.seed)

    t0 = time.time()
    records = run_benchmark(suite, methods, master_seed=args.seed,
                            timings=bool(args.out), jobs=args.jobs)
    print(f"{len(records)} runs in {time.time() - t0:.1f}s")

    agg = aggregate(records)
    for name, entry in agg["methods"].items():
        print(f"{name}: success {entry['success_rate']:.2f} "
              f"({entry['successes']}/{entry['instances']})"
              + ("" if entry["mean_sum_of_costs"] is None else
                 f", cost/agent {entry['mean_cost_per_agent']:.2f}"
                 f", expanded/agent {entry['mean_expanded_per_agent']:.1f}"
                 f", vertices/agent/t {entry['mean_vertices_per_agent_per_timestep']:.1f}"))
    if agg["excluded"]:
        print("excluded (below success threshold):", ", ".join(agg["excluded"]))
    print(f"common-success instances: {len(agg['common_success_instances'])}")

    if args.out:
        config = {"command": "evaluate_trend", "methods": args.methods,
                  "scenario": args.scenario, "instances": args.instances, "seed": args.seed}
        os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
        write_metrics_jsonl(args.out, config, records)
        agg_path = args.out.rsplit(".", 1)[0] + ".aggregate.json"
        with open(agg_path, "w") as fh:
            json.dump({**agg, "config": config}, fh, indent=2, sort_keys=True)
        print(f"wrote {args.out} and {agg_path}")


if __name__ == "__main__":
    main()
