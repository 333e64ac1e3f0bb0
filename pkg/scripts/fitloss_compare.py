#!/usr/bin/env python3
"""Eval-mode training loss for LayerNorm, DyT and Derf trained under stochastic depth."""

import argparse
from dataclasses import replace

from derfkit import harness


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=1000)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--drop-path", type=float, default=0.1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--out-dir", default="runs/fitloss")
    args = ap.parse_args()

    base = harness.TrainSpec()
    base = replace(base, steps=args.steps, master_seed=args.seed,
                   model=replace(base.model, drop_path_rate=args.drop_path))
    exp = harness.ExperimentSpec("fitloss", base, tuple(harness.fitloss_grid()), args.repeats)
    res = harness.run_experiment(exp, workers=args.workers, checkpoint_dir=None)
    path = harness.write_report(res.report, args.out_dir, res.trials)
    print(harness.format_ranking(res.report))
    for t in res.trials:
        print(f"{t.trial_id:<24} eval-mode {t.eval_mode_train_loss:.5f}  "
              f"train-mode {t.train_mode_train_loss:.5f}")
    print(f"report: {path}")


if __name__ == "__main__":
    main()
