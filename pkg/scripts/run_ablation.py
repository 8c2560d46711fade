"""Train the ablation variants and compare their benchmark success rates.

    python3 scripts/run_ablation.py --models-dir models/ --out ablation.jsonl

Variants: full, no_comm (communication features zeroed), no_ind (indicator
head disabled), no_random_walk (goal-biased sampling only, shares the full
model).  Checkpoints are reused from --models-dir when present, otherwise
trained and saved there.  All variants run under identical per-instance
seed streams.
"""
import argparse
import os

from ctrmplan.instance import scenario_config
from ctrmplan.neural import TrainConfig, build_model, load_model, save_model, train
from ctrmplan.pipeline import (
    ABLATION_VARIANTS,
    TAG_DEMOS,
    aggregate,
    extract_training_samples,
    gen_demonstrations,
    gen_instance_suite,
    run_ablation,
    seeded_rng,
    variant_model_config,
    write_metrics_jsonl,
)

TRAINED = ("full", "no_comm", "no_ind")  # no_random_walk reuses full


def ensure_models(models_dir: str, demos: int, val: int, epochs: int, seed: int) -> dict:
    os.makedirs(models_dir, exist_ok=True)
    missing = [v for v in TRAINED if not os.path.exists(os.path.join(models_dir, f"{v}.npz"))]
    if missing:
        print(f"training {', '.join(missing)}")
        cfg = scenario_config("basic", "desk")
        ds = gen_demonstrations(demos, cfg, seeded_rng(seed, TAG_DEMOS), n_val=val)
        train_ss = extract_training_samples(ds.train)
        val_ss = extract_training_samples(ds.val)
        for variant in missing:
            model = build_model(variant_model_config(variant), seed=seed)
            hist = train(model, train_ss, val_ss, TrainConfig(epochs=epochs, seed=seed))
            path = os.path.join(models_dir, f"{variant}.npz")
            save_model(model, path)
            print(f"  {variant}: best val {hist.best_val_loss:.4f}, saved {path}")
    return {v: load_model(os.path.join(models_dir, f"{v}.npz")) for v in TRAINED}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--models-dir", default="models")
    ap.add_argument("--demos", type=int, default=50)
    ap.add_argument("--val", type=int, default=10)
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--train-seed", type=int, default=1)
    ap.add_argument("--instances", type=int, default=16)
    ap.add_argument("--agents", type=int, nargs=2, default=(6, 8), metavar=("LO", "HI"))
    ap.add_argument("--obstacles", type=int, default=3)
    ap.add_argument("--seed", type=int, default=5, help="benchmark master seed")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", help="metrics JSONL path")
    args = ap.parse_args()

    models = ensure_models(args.models_dir, args.demos, args.val, args.epochs, args.train_seed)
    suite_cfg = scenario_config("basic", "desk",
                                agent_count_range=tuple(args.agents),
                                obstacle_count=args.obstacles)
    suite = gen_instance_suite(args.instances, suite_cfg, master_seed=args.seed)

    records = []
    for variant in ABLATION_VARIANTS:
        recs = run_ablation(variant, suite, models, master_seed=args.seed, jobs=args.jobs)
        records.extend(recs)
        rate = aggregate(recs, threshold=0.0)["methods"][variant]["success_rate"]
        print(f"{variant}: success {rate:.3f}")

    if args.out:
        config = {"command": "run_ablation", "instances": args.instances,
                  "agents": list(args.agents), "obstacles": args.obstacles, "seed": args.seed}
        os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
        write_metrics_jsonl(args.out, config, records)
        print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
