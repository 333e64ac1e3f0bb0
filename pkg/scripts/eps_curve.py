#!/usr/bin/env python3
"""Print the L1 gap between tanh(eps x) and erf(x) around its minimum, and the fitted eps."""

import argparse

import numpy as np

from derfkit import props


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--radius", type=float, default=8.0)
    ap.add_argument("--points", type=int, default=17)
    args = ap.parse_args()

    res = props.fit_eps(truncation_radius=args.radius)
    for eps in np.linspace(0.8, 1.6, args.points):
        v = props.l1_objective(float(eps), args.radius)
        print(f"eps={eps:.3f}  L1={v:.6f}  {'#' * int(100 * v)}")
    print(f"eps* = {res.eps_star:.7f}  L1 = {res.objective_value:.7f}")


if __name__ == "__main__":
    main()
