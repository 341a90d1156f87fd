#!/usr/bin/env python3
"""Run one tradeoff panel: empirical EB/oracle curves vs. theory.

Example:
    python scripts/run_panel.py --row 1 --delta 0.5 --p 5000 --reps 17 \
        --out runs/row1_d05
"""

import argparse
import sys

from eblasso import priors as P
from eblasso import sim

PRIORS = {
    1: P.PriorSpec(0.1, (P.gaussian(1.0, 3.5, 1.0),)),
    2: P.PriorSpec(0.1, (P.gaussian(0.2, -3.6, 1.0),
                         P.gaussian(0.8, 4.0, 1.0))),
    3: P.PriorSpec(0.1, (P.point(1.0, -4.3),)),
    4: P.PriorSpec(0.1, (P.point(0.2, -2.0), P.point(0.8, 3.0))),
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--row", type=int, choices=PRIORS, default=1)
    ap.add_argument("--delta", type=float, default=0.5)
    ap.add_argument("--p", type=int, default=5000)
    ap.add_argument("--reps", type=int, default=17)
    ap.add_argument("--lam", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--methods", nargs="+",
                    default=["eb", "oracle", "thresholded_lasso"])
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    cfg = sim.ExperimentConfig(
        prior=PRIORS[args.row], sigma=1.0, delta=args.delta, p=args.p,
        lambda_policy=sim.FixedLambda(args.lam), replications=args.reps,
        seed=args.seed, methods=tuple(args.methods),
        name=f"row{args.row}_d{args.delta}")
    _, report = sim.run(cfg, out_dir=args.out, plot=args.out is not None)
    for method, dev in report.deviations.items():
        print(f"{method:>18}: mad={dev['mad']:.4f} sup={dev['sup']:.4f} "
              f"({dev['points']} grid pts)")
    print(f"done in {report.seconds:.1f}s"
          + (f"; outputs in {args.out}" if args.out else ""))
    return 0


if __name__ == "__main__":
    sys.exit(main())
