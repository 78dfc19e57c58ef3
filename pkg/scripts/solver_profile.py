"""Inner-iteration counts of the scaling solver with and without extrapolation.

Projects Dirichlet points onto odds-ratio alternatives of the 2x2 table and
the vaccine model, and prints median / max iterations and wall time.
"""
import argparse
import time

import numpy as np

from geopower.models import builtin_model, vaccine_alternative
from geopower.sampling import DirichletParams, sample_alternatives
from geopower.scaling import ScalingConfig


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--points", type=int, default=2000)
    p.add_argument("--seed", type=int, default=1)
    args = p.parse_args()
    cases = [("2x2 odds 5", builtin_model("indep2x2").with_odds([5.0])),
             ("2x2 odds 50", builtin_model("indep2x2").with_odds([50.0])),
             ("vaccine k=2", vaccine_alternative(2.0))]
    print("case,dirichlet,extrapolate,median_iters,max_iters,failed,seconds")
    for name, model in cases:
        for a in (1.0, 0.5):
            for ex in (False, True):
                t0 = time.perf_counter()
                fit = sample_alternatives(model, DirichletParams.symmetric(a, 4), args.seed,
                                          range(args.points), ScalingConfig(extrapolate=ex))
                dt = time.perf_counter() - t0
                print(f"{name},{a:g},{ex},{np.median(fit.inner_iters):.0f},"
                      f"{fit.inner_iters.max()},{int((~fit.ok).sum())},{dt:.2f}")


if __name__ == "__main__":
    main()
