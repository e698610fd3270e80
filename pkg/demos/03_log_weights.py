"""Oracle, Picard and second-order log-weights on common paths.

Shows the constant-sensor exactness, the recursive update and the refusal
to exponentiate the order-3 exponent.
"""

import numpy as np

from ksfilter.errors import UnboundedMomentError
from ksfilter.functionals import (log_weight_oracle, log_weight_order2, log_weight_picard,
                                  mesh_guard, update_recursive, xi_general)
from ksfilter.model import bounded_model, const_model
from ksfilter.paths import Partition, sample_bundle


def main():
    model = bounded_model()
    b = sample_bundle(model, Partition.uniform(1.0, 0.025), 8, seed=5, n_paths=2000)
    oracle = log_weight_oracle(model, b).value
    print("delta   rms(picard - oracle)  rms(order2 - oracle)")
    for d in (0.2, 0.1, 0.05, 0.025):
        P = Partition.uniform(1.0, d)
        e1 = np.sqrt(np.mean((log_weight_picard(model, b, P).value - oracle) ** 2))
        e2 = np.sqrt(np.mean((log_weight_order2(model, b, P).value - oracle) ** 2))
        print(f"{d:<7} {e1:20.3e}  {e2:20.3e}")

    c = const_model(c=1.0)
    bc = sample_bundle(c, Partition.uniform(1.0, 0.1), 8, seed=6, n_paths=1000)
    gap = np.abs(log_weight_order2(c, bc, bc.partition).value - log_weight_oracle(c, bc).value)
    print(f"\nconstant sensor: max |order2 - oracle| = {gap.max():.1e}")

    P = Partition.uniform(1.0, 0.1)
    lw = log_weight_order2(model, b, Partition(P.points[:2]))
    for k in range(3, P.points.size + 1):
        lw = update_recursive(lw, model, b, Partition(P.points[:k]))
    same = np.array_equal(lw.value, log_weight_order2(model, b, P).value)
    print("recursive update equals one-shot bit for bit:", same)

    xi3 = xi_general(model, b, P, 3)
    try:
        xi3.exponentiate()
    except UnboundedMomentError as exc:
        print("order 3:", exc)

    for p in (1, 2):
        v = mesh_guard(p, model, 0.3)
        print(f"mesh guard p={p}: delta0 = {v.delta0}, delta = 0.3 ok = {v.ok}")


if __name__ == "__main__":
    main()
