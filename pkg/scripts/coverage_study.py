#!/usr/bin/env python3
"""Monte Carlo coverage of bootstrap percentile intervals for the substitution model.

    python3 scripts/coverage_study.py --trials 50 --replicates 200
"""

import argparse
import time

from scootsub.synth import coverage_study


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--replicates", type=int, default=200)
    ap.add_argument("--ci", type=float, default=0.90)
    ap.add_argument("--zones", type=int, default=50)
    ap.add_argument("--noise", type=float, default=10.0, help="sd of additive forecast noise (trips)")
    ap.add_argument("--seed0", type=int, default=1000)
    args = ap.parse_args()

    t0 = time.perf_counter()
    res = coverage_study(n_trials=args.trials, B=args.replicates, ci_level=args.ci, n_zones=args.zones,
                         noise_sd_trips=args.noise, seed0=args.seed0)
    print(f"{'parameter':<12}coverage")
    for name, c in zip(res.names, res.per_parameter):
        print(f"{name:<12}{c:.3f}")
    print(f"pooled      {res.pooled:.3f}  (nominal {args.ci:.2f}, {args.trials} trials, "
          f"B = {args.replicates}, {time.perf_counter() - t0:.0f}s)")


if __name__ == "__main__":
    main()
