#!/usr/bin/env python3
"""Run the property sweeps (shift, bound, mix, flat, monotonic, growth) one after another.

Each sweep writes its own report directory under --out-dir.
"""

import argparse
from dataclasses import replace
from pathlib import Path

from derfkit import funcs, harness

BASES = ("erf", "tanh", "arctan_scaled")
SHIFTS = (-2, -1, -0.5, -0.1, 0, 0.1, 0.5, 1, 2)


def grids():
    yield "shift_h", "shift_sweep", harness.shift_grid(BASES, "horizontal", SHIFTS)
    yield "shift_v", "shift_sweep", harness.shift_grid(BASES, "vertical", SHIFTS)
    yield "bound", "bound_sweep", harness.bound_grid(("arcsinh", "logsign", "linear"),
                                                     (0.5, 0.8, 1.0, 2.0, 3.0, 5.0))
    yield "mix", "mix_sweep", harness.mix_grid(BASES + ("isru",), (0.01, 0.1, 0.5))
    yield "flat", "flat_sweep", harness.flat_grid(BASES, (0, 0.1, 0.5, 1.0, 2.0, 3.0))
    yield "monotonic", "monotonic_compare", harness.monotonic_grid(BASES)
    yield "growth", "growth_probe", harness.growth_grid(funcs.GROWTH_PROBES)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=300)
    ap.add_argument("--repeats", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--only", help="comma-separated subset, e.g. shift_h,flat")
    ap.add_argument("--out-dir", default="runs/sweeps")
    args = ap.parse_args()

    wanted = set(args.only.split(",")) if args.only else None
    base = replace(harness.TrainSpec(), steps=args.steps, master_seed=args.seed)
    for name, kind, grid in grids():
        if wanted and name not in wanted:
            continue
        exp = harness.ExperimentSpec(kind, base, tuple(grid), args.repeats)
        res = harness.run_experiment(exp, workers=args.workers)
        path = harness.write_report(res.report, Path(args.out_dir) / name, res.trials)
        print(f"== {name}")
        print(harness.format_ranking(res.report))
        print(f"report: {path}\n")


if __name__ == "__main__":
    main()
