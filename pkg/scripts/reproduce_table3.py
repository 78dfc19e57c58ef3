"""Full cumulative-power grid for the vaccine model under both Dirichlet priors.

Writes table3_dir1.csv, table3_dir0.5.csv and report_table3.txt.
"""
import argparse

from geopower.power import DEFAULT_NSIM, DEFAULT_SEED
from geopower.repro import run_item


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="results/table3")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--nsim", type=int, default=DEFAULT_NSIM)
    p.add_argument("--jobs", type=int, default=4)
    args = p.parse_args()
    checks = run_item("table3", args.out, seed=args.seed, n_sim=args.nsim, jobs=args.jobs)
    print(f"{sum(c.passed for c in checks)}/{len(checks)} checks passed")


if __name__ == "__main__":
    main()
