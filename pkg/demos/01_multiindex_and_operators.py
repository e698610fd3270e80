"""Multi-indices, hierarchical sets and the generator operators.

The second-order scheme expands the sensor along multi-indices of length at
most one; the operators L^0 and L^r supply the expansion coefficients.
"""

import numpy as np

from ksfilter.model import ScalarFunction, apply_L0, apply_Lalpha, apply_Lr, bounded_model, lh_sup_bound
from ksfilter.multiindex import S0, S1, MultiIndex, concat, drop_first, drop_last, hierarchical_set, remainder_set


def main():
    a = MultiIndex((0, 1))
    print("concat (0,1) * (1)    ->", concat(a, MultiIndex((1,))))
    print("drop_last (0,1,1)     ->", drop_last(MultiIndex((0, 1, 1))))
    print("drop_first (0,1,1)    ->", drop_first(MultiIndex((0, 1, 1))))
    for m in range(3):
        H, R = hierarchical_set(m, S0, 1), remainder_set(m, S0, 1)
        print(f"M_{m}(S0): {len(H.members)} members, remainder {len(R.members)}")
    print("M_2(S1) =", [str(x) for x in hierarchical_set(2, S1, 1).members])

    # bounded model: f = -tanh, sigma = 1; apply the operators to g = sin
    model = bounded_model()
    g = ScalarFunction(lambda x: np.sin(x[..., 0]), np.cos, lambda x: -np.sin(x)[..., None], "sin")
    x = np.linspace(-2, 2, 5)[:, None]
    print("\n      x    L0 sin     L1 sin   L1L1 sin")
    for xi, l0, l1, l11 in zip(x[:, 0], apply_L0(model, g, x), apply_Lr(model, g, x, 1),
                               apply_Lalpha(model, g, x, (1, 1))):
        print(f"  {xi:5.2f}  {l0:8.4f}  {l1:8.4f}  {l11:8.4f}")
    print("\nsup |L^r h| for the bounded model:", lh_sup_bound(model))


if __name__ == "__main__":
    main()
