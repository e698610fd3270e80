"""Convergence-rate study of rho and pi on the bounded model.

Defaults are a reduced version of the full study (16 outer paths x 2e5
inner paths); pass n_outer and n_inner to scale it up.
"""

import sys

from ksfilter.estimator import lp_error_study
from ksfilter.model import TEST_FUNCTIONS, bounded_model
from ksfilter.paths import Partition


def main(n_outer=4, n_inner=8192, workers=1):
    parts = [Partition.uniform(1.0, d) for d in (0.2, 0.1, 0.05, 0.025)]
    res = lp_error_study(bounded_model(), TEST_FUNCTIONS["x"], 2, parts, n_outer, n_inner, 8,
                         master_seed=20240101, workers=workers, guard_p=1, n_boot=200)
    for rep in res.reports:
        errs = "  ".join(f"{e:.2e}" for e in rep.lp_error)
        fit = f"slope {rep.fit.slope:.2f} [{rep.fit.slope_lo:.2f}, {rep.fit.slope_hi:.2f}]" if rep.fit else "exact"
        flag = "  UNRESOLVED" if rep.unresolved else ""
        print(f"{rep.scheme:8} {rep.quantity:3}  {errs}  {fit}{flag}")


if __name__ == "__main__":
    main(*[int(a) for a in sys.argv[1:]])
