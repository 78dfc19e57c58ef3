"""Geometric power against the X^2 radius for odds-ratio alternatives on a 2x2 table.

One curve per odds ratio (1/10, 5, 50 and the null 1) and Dirichlet prior.
"""
import argparse

from geopower.power import DEFAULT_NSIM, DEFAULT_SEED
from geopower.repro import run_item


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="results/geometric")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--nsim", type=int, default=DEFAULT_NSIM)
    p.add_argument("--jobs", type=int, default=1)
    args = p.parse_args()
    run_item("example3", args.out, seed=args.seed, n_sim=args.nsim, jobs=args.jobs)


if __name__ == "__main__":
    main()
