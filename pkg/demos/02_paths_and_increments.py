"""Fine-grid paths and the per-interval integrals ΔY, A and B.

A and B are left-point Itô sums on the fine grid, so their moments carry a
(1 - 1/M) factor relative to the continuous-time values.
"""

import sys

import numpy as np

from ksfilter.model import bounded_model
from ksfilter.paths import Partition, interval_increments, refine_bundle, sample_bundle


def main(n=20_000):
    model = bounded_model()
    d, M = 0.1, 64
    b = sample_bundle(model, Partition([0.0, d]), M, seed=(1, 2), n_paths=n)
    inc = interval_increments(b, b.partition)
    dy, A, B = inc.deltaY[:, 0, 1], inc.A[:, 0, 1], inc.B[:, 0, 1, 0]
    rows = [
        ("Var dY", np.var(dy), d, d),
        ("Cov(dY, A)", np.mean(dy * A), d * d / 2 * (1 - 1 / M), d * d / 2),
        ("Var A", np.var(A), d ** 3 / 3 * (1 - 1 / M) * (1 - 1 / (2 * M)), d ** 3 / 3),
        ("Var B", np.mean(B * B), d * d / 2 * (1 - 1 / M), d * d / 2),
    ]
    print(f"{'':12} {'sample':>10} {'M = 64':>10} {'M -> inf':>10}")
    for name, est, finite, limit in rows:
        print(f"{name:12} {est:10.3e} {finite:10.3e} {limit:10.3e}")

    # nested refinement by Brownian bridges keeps the coarse noise fixed
    b = sample_bundle(model, Partition.uniform(1.0, 0.1), 2, seed=3, n_paths=1000)
    prev = interval_increments(b, b.partition).B
    print("\nM    rms change in B after halving the fine step")
    for _ in range(4):
        b = refine_bundle(model, b)
        cur = interval_increments(b, b.partition).B
        print(f"{b.n_fine // 10:<4} {np.sqrt(np.mean((cur - prev) ** 2)):.3e}")
        prev = cur


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 20_000)
