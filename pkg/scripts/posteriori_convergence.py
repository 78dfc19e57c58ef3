"""Posteriori power for the vaccine trial data over ten independent sequences.

Also writes the running rejection rate of the first three sequences, which
shows how fast the Monte-Carlo estimate settles.
"""
import argparse

from geopower.power import DEFAULT_NSIM, DEFAULT_SEED
from geopower.repro import run_item


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="results/posteriori")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--nsim", type=int, default=DEFAULT_NSIM)
    p.add_argument("--jobs", type=int, default=1)
    args = p.parse_args()
    run_item("section5", args.out, seed=args.seed, n_sim=args.nsim, jobs=args.jobs)


if __name__ == "__main__":
    main()
