"""Second-order filter estimate against the Kalman-Bucy mean on the linear model."""

import sys

from ksfilter.estimator import estimate_all
from ksfilter.model import TEST_FUNCTIONS, linear_model
from ksfilter.paths import Partition, sample_observation
from ksfilter.reference import kalman_bucy


def main(n_outer=4, n_inner=20_000):
    model = linear_model(a=-1.0, sigma=1.0, c=1.0, m0=0.0, P0=1.0)
    P, M = Partition.uniform(1.0, 0.05), 16
    times = P.refine(M)
    print("path   kalman     oracle     picard1    order2     se(order2)")
    for o in range(n_outer):
        key = (123, o)
        est = estimate_all(model, TEST_FUNCTIONS["x"], key, P, n_inner, M)
        kb = kalman_bucy(model, sample_observation(times, 1, key)[0, :, 0], times)
        print(f"{o:<6} {kb.mean[-1]:+.5f}  {est['oracle'].pi_phi:+.5f}  {est['picard1'].pi_phi:+.5f}  "
              f"{est['order2'].pi_phi:+.5f}  {est['order2'].std_error_pi_phi:.5f}")
    print(f"\nfilter variance at t=1: {kb.variance[-1]:.5f}")


if __name__ == "__main__":
    args = [int(a) for a in sys.argv[1:]]
    main(*args)
