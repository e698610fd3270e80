"""Log-likelihood functionals of the signal path.

Three log-weights are computed on the same fine path:

* ``oracle``: the fine-grid left-point sum of ``h(X) dY - 1/2 h(X)^2 ds``;
* ``picard1``: the sensor frozen at the left end of each coarse interval;
* ``order2``: the first-order Itô-Taylor expansion of the sensor on each
  interval, adding ``L^0 h`` against ``∫(s - t_j) dY`` and ``L^r h``
  against ``∫(V^r_s - V^r_{t_j}) dY``.

Per-interval exponents are summed over sensor components ``i = 0..d_Y``
(then noise components ``r``) in a fixed order; log-weights accumulate the
interval exponents sequentially, so a recursive update reproduces the
one-shot value bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, NumericError, UnboundedMomentError, UnsupportedOrderError
from .model import AugmentedSensor, SignalModel, apply_Lalpha, lh_sup_bound, sensor_generators
from .multiindex import S0, hierarchical_set
from .paths import PathBundle, Partition, interval_increments, interval_slices, node_indices, running_iterated

ORACLE = "oracle"
PICARD1 = "picard1"
ORDER2 = "order2"
SCHEMES = (ORACLE, PICARD1, ORDER2)


@dataclass
class LogWeight:
    value: np.ndarray  # (P,)
    scheme: str
    partition: Optional[Partition] = None

    def __post_init__(self):
        bad = ~np.isfinite(self.value)
        if np.any(bad):
            raise NumericError(f"non-finite {self.scheme} log-weight",
                               where={"path": int(np.flatnonzero(bad)[0])})


def log_weight_oracle(model: SignalModel, bundle: PathBundle) -> LogWeight:
    aug = AugmentedSensor(model)
    hv = aug.values(bundle.X[:, :-1])  # (P, n_fine, d_Y + 1)
    dYa = bundle.dY_aug(0, bundle.n_fine)
    terms = hv[..., 0] * dYa[..., 0]
    for i in range(1, model.d_Y + 1):
        terms = terms + hv[..., i] * dYa[..., i]
    return LogWeight(np.sum(terms, axis=1), ORACLE)


def _exponents(model, hv, L0h, Lrh, inc, scheme):
    acc = np.zeros(np.broadcast_shapes(hv.shape[:-1], inc.B.shape[:-2]))
    for i in range(model.d_Y + 1):
        acc = acc + hv[..., i] * inc.deltaY[..., i]
        if scheme == ORDER2:
            acc = acc + L0h[..., i] * inc.A[..., i]
            for r in range(model.d_V):
                acc = acc + Lrh[..., i, r] * inc.B[..., i, r]
    return acc


def interval_exponents(model: SignalModel, bundle: PathBundle, partition: Partition,
                       scheme: str, intervals=None) -> np.ndarray:
    """Exponent of every coarse interval, shape ``(P, n_selected)``."""
    return coarse_exponents(model, bundle, partition, (scheme,), intervals)[scheme]


def coarse_exponents(model: SignalModel, bundle: PathBundle, partition: Partition,
                     schemes=(PICARD1, ORDER2), intervals=None) -> dict:
    """Interval exponents for several coarse schemes sharing one set of increments."""
    for scheme in schemes:
        if scheme not in (PICARD1, ORDER2):
            raise DomainError(f"unknown coarse scheme {scheme!r}")
    nodes = node_indices(bundle.times, partition)[:-1]
    js = np.arange(partition.n_intervals) if intervals is None else np.asarray(intervals, dtype=int)
    if js.size == 0:
        return {s: np.zeros((bundle.n_paths, 0)) for s in schemes}
    inc = interval_increments(bundle, partition, js)
    hv, L0h, Lrh = sensor_generators(model, bundle.X[:, nodes[js]])
    return {s: _exponents(model, hv, L0h, Lrh, inc, s) for s in schemes}


def coarse_log_weights(model, bundle, partition, schemes=(PICARD1, ORDER2)) -> dict:
    exps = coarse_exponents(model, bundle, partition, schemes)
    start = np.zeros(bundle.n_paths)
    return {s: LogWeight(_accumulate(start, e), s, partition) for s, e in exps.items()}


def _accumulate(start: np.ndarray, exps: np.ndarray) -> np.ndarray:
    out = start
    for j in range(exps.shape[1]):
        out = out + exps[:, j]
    return out


def _coarse(model, bundle, partition, scheme):
    return coarse_log_weights(model, bundle, partition, (scheme,))[scheme]


def log_weight_picard(model: SignalModel, bundle: PathBundle, partition: Partition) -> LogWeight:
    return _coarse(model, bundle, partition, PICARD1)


def log_weight_order2(model: SignalModel, bundle: PathBundle, partition: Partition) -> LogWeight:
    return _coarse(model, bundle, partition, ORDER2)


def log_weight(model, bundle, partition, scheme) -> LogWeight:
    if scheme == ORACLE:
        return log_weight_oracle(model, bundle)
    return _coarse(model, bundle, partition, scheme)


def update_recursive(prev: LogWeight, model: SignalModel, bundle: PathBundle,
                     partition: Partition) -> LogWeight:
    """Extend ``prev`` to ``partition`` by adding only the new intervals' exponents.

    ``prev.partition`` must be a prefix of ``partition``; the bundle must
    cover the extended horizon.
    """
    if prev.scheme not in (PICARD1, ORDER2):
        raise DomainError("only coarse-scheme log-weights can be updated recursively")
    if prev.partition is None or not prev.partition.is_prefix_of(partition):
        raise DomainError("previous partition is not a prefix of the extended partition")
    new = np.arange(prev.partition.n_intervals, partition.n_intervals)
    exps = interval_exponents(model, bundle, partition, prev.scheme, new)
    return LogWeight(_accumulate(prev.value, exps), prev.scheme, partition)


@dataclass
class XiVector:
    """Per-component exponents ``ξ_i`` (shape ``(P, d_Y + 1)``) of an order-``m`` scheme.

    ``terms`` keeps every summand, shape ``(P, n_intervals, d_Y + 1, K)``, so
    that ``total`` can add them interval-major, then ``i``, then term, which
    is the order used by the log-weights.
    """

    components: np.ndarray
    order: int
    terms: Optional[np.ndarray] = None

    def total(self) -> np.ndarray:
        """Sum over components ``i``: the log-weight of the scheme."""
        if self.terms is None:
            return np.sum(self.components, axis=-1)
        P, n, d1, K = self.terms.shape
        out = np.zeros(P)
        for j in range(n):
            acc = np.zeros(P)
            for i in range(d1):
                for k in range(K):
                    acc = acc + self.terms[:, j, i, k]
            out = out + acc
        return out

    def exponentiate(self) -> np.ndarray:
        if self.order >= 3:
            raise UnboundedMomentError(
                f"the order-{self.order} exponent does not have finite exponential "
                "moments; it cannot be used as a weight"
            )
        return np.exp(self.total())


def xi_general(model: SignalModel, bundle: PathBundle, partition: Partition, m: int) -> XiVector:
    """Exponents from the ``(m-1)``-order Itô-Taylor expansion of each ``h^i``.

    Sums ``L^α h^i(X_{t_j}) · Σ_k I_α(1)_{t_j, s_k} dY^i_k`` over intervals
    ``j`` and ``α`` of length at most ``m - 1``.  Length-2 ``α`` (``m = 3``)
    use finite-difference ``L^α`` and lose several digits.
    """
    if not 1 <= m <= 3:
        raise UnsupportedOrderError(f"xi_general supports 1 <= m <= 3, got {m}")
    nodes = node_indices(bundle.times, partition)[:-1]
    slices = interval_slices(bundle, partition)
    inc = interval_increments(bundle, partition)
    x = bundle.X[:, nodes]
    hv, L0h, Lrh = sensor_generators(model, x)
    P, d1, dV = bundle.n_paths, model.d_Y + 1, model.d_V
    higher = [a for a in hierarchical_set(m - 1, S0, dV) if len(a) == 2]
    K = 1 + (1 + dV if m >= 2 else 0) + len(higher)
    terms = np.zeros((P, len(slices), d1, K))
    terms[..., 0] = hv * inc.deltaY
    if m >= 2:
        terms[..., 1] = L0h * inc.A
        terms[..., 2:2 + dV] = Lrh * inc.B
    sens = [model.sensor_component(i) for i in range(d1)]
    for j, (k0, k1) in enumerate(slices):
        dYa = bundle.dY_aug(k0, k1)
        for q, alpha in enumerate(higher):
            ii = running_iterated(bundle, alpha, k0, k1)[:, :-1]
            for i in range(d1):
                integral = np.sum(ii * dYa[..., i], axis=1)
                terms[:, j, i, 2 + dV + q] = apply_Lalpha(model, sens[i], x[:, j], alpha) * integral
    return XiVector(terms.sum(axis=(1, 3)), m, terms)


@dataclass(frozen=True)
class MeshGuardVerdict:
    delta0: float
    delta: float
    ok: bool
    lh_bound_flag: str


def mesh_guard(p: float, model: SignalModel, delta: float, d_Y: Optional[int] = None,
               d_V: Optional[int] = None, lh_bound=None) -> MeshGuardVerdict:
    """``δ₀ = 1 / (2 p ‖Lh‖∞ sqrt(d_Y d_V))`` and whether ``delta < δ₀``."""
    if p < 1:
        raise DomainError(f"p must be >= 1, got {p}")
    d_Y = model.d_Y if d_Y is None else d_Y
    d_V = model.d_V if d_V is None else d_V
    bound = lh_sup_bound(model) if lh_bound is None else lh_bound
    if bound.value == 0.0:
        delta0 = float("inf")
    else:
        delta0 = 1.0 / (2.0 * p * bound.value * np.sqrt(d_Y * d_V))
    return MeshGuardVerdict(delta0, float(delta), bool(delta < delta0), bound.flag)
