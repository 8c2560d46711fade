"""Train the desk-scale vertex sampler end to end.

Generates demonstrations with the classical planner, extracts training
windows, trains the sampler, and writes a checkpoint:

    python3 scripts/train_desk_model.py --out models/desk_full.npz

Finishes in a couple of minutes on a laptop CPU.
"""
import argparse
import os
import time

from ctrmplan.instance import scenario_config
from ctrmplan.neural import ModelConfig, TrainConfig, build_model, save_model, train
from ctrmplan.pipeline import (
    TAG_DEMOS,
    extract_training_samples,
    gen_demonstrations,
    seeded_rng,
)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="desk_full.npz", help="checkpoint path")
    ap.add_argument("--scenario", default="basic")
    ap.add_argument("--demos", type=int, default=50, help="training demonstrations")
    ap.add_argument("--val", type=int, default=10, help="validation demonstrations")
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    cfg = scenario_config(args.scenario, "desk")
    t0 = time.time()
    ds = gen_demonstrations(args.demos, cfg, seeded_rng(args.seed, TAG_DEMOS), n_val=args.val)
    t1 = time.time()
    print(f"demonstrations: {len(ds.train)}+{len(ds.val)} in {t1 - t0:.1f}s")

    train_ss = extract_training_samples(ds.train)
    val_ss = extract_training_samples(ds.val)
    t2 = time.time()
    print(f"samples: {train_ss.size} train, {val_ss.size} val in {t2 - t1:.1f}s")

    model = build_model(ModelConfig(), seed=args.seed)
    tc = TrainConfig(epochs=args.epochs, seed=args.seed)
    hist = train(model, train_ss, val_ss, tc)
    t3 = time.time()
    print(f"training: {(t3 - t2) / 60:.1f} min, "
          f"val {hist.val_loss[0]:.4f} -> {hist.best_val_loss:.4f} (epoch {hist.best_epoch})")

    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    save_model(model, args.out, tc)
    print(f"saved {args.out} ({(t3 - t0) / 60:.1f} min total)")


if __name__ == "__main__":
    main()
