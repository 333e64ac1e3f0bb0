#!/usr/bin/env python3
"""Train every search candidate on the toy task and print the ranking.

Defaults mirror the library's toy setup (1000 steps, 3 repeats), which takes
about an hour single-threaded; use --steps / --workers to trade accuracy for time.
"""

import argparse
from dataclasses import replace

from derfkit import harness


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=1000)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--s-mode", default="scalar", choices=("absent", "scalar", "per_channel"))
    ap.add_argument("--out-dir", default="runs/search")
    args = ap.parse_args()

    base = replace(harness.TrainSpec(), steps=args.steps, master_seed=args.seed)
    exp = harness.ExperimentSpec("search", base, tuple(harness.search_grid(s_mode=args.s_mode)),
                                 args.repeats)
    res = harness.run_experiment(exp, workers=args.workers)
    path = harness.write_report(res.report, args.out_dir, res.trials)
    print(harness.format_ranking(res.report))
    print(f"report: {path}")


if __name__ == "__main__":
    main()
