import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ksfilter.errors import DomainError, NumericError, UnboundedMomentError, UnsupportedOrderError
from ksfilter.functionals import (LogWeight, log_weight_oracle, log_weight_order2, log_weight_picard,
                                  mesh_guard, update_recursive, xi_general)
from ksfilter.model import LhBound, bounded_model, const_model, linear_model, with_oracle
from ksfilter.paths import Partition, sample_bundle


@pytest.fixture(scope="module")
def bundle():
    return sample_bundle(bounded_model(), Partition.uniform(1.0, 0.1), 8, (3, 1), n_paths=400)


def test_zero_sensor_gives_zero_weight():
    m = const_model(c=0.0)
    b = sample_bundle(m, Partition.uniform(1.0, 0.25), 4, 0, n_paths=10)
    np.testing.assert_array_equal(log_weight_oracle(m, b).value, 0.0)
    np.testing.assert_array_equal(log_weight_order2(m, b, b.partition).value, 0.0)


@pytest.mark.parametrize("c", [1.0, -0.7, 2.5])
def test_constant_sensor_closed_form(c):
    m = const_model(c=c)
    P = Partition([0.0, 0.3, 0.55, 1.0])
    b = sample_bundle(m, P, 8, 4, n_paths=1000)
    Yt = b.dY.sum(axis=1)[:, 0]
    want = c * Yt - 0.5 * c * c
    for lw in (log_weight_oracle(m, b), log_weight_picard(m, b, P), log_weight_order2(m, b, P)):
        np.testing.assert_allclose(lw.value, want, rtol=1e-12, atol=1e-12)
    o, s = log_weight_oracle(m, b).value, log_weight_order2(m, b, P).value
    assert np.all(np.abs(s - o) <= 1e-12 * (1 + np.abs(o)))


def test_picard_single_interval_uses_initial_state(bundle):
    m = bounded_model()
    P = Partition([0.0, 1.0])
    h0 = np.sin(bundle.X[:, 0, 0])
    Y = bundle.dY.sum(axis=1)[:, 0]
    np.testing.assert_allclose(log_weight_picard(m, bundle, P).value, h0 * Y - 0.5 * h0 ** 2, rtol=1e-12)


def test_frozen_signal_order2_equals_picard():
    m = linear_model(a=0.0, sigma=0.0, exact=False)
    P = Partition.uniform(1.0, 0.2)
    b = sample_bundle(m, P, 8, 1, n_paths=50)
    np.testing.assert_array_equal(b.X, np.repeat(b.X[:, :1], b.X.shape[1], axis=1))
    np.testing.assert_allclose(log_weight_order2(m, b, P).value, log_weight_picard(m, b, P).value,
                               rtol=0, atol=1e-15)


def test_oracle_is_fine_grid_sum(bundle):
    x = bundle.X[:, :-1, 0]
    dY = bundle.dY[:, :, 0]
    want = np.sum(np.sin(x) * dY - 0.5 * np.sin(x) ** 2 * bundle.dt, axis=1)
    np.testing.assert_allclose(log_weight_oracle(bounded_model(), bundle).value, want, rtol=1e-12)


def test_pathwise_errors_shrink_with_mesh():
    m = bounded_model()
    b = sample_bundle(m, Partition.uniform(1.0, 0.025), 8, 5, n_paths=2000)
    o = log_weight_oracle(m, b).value
    err = {}
    for d in (0.2, 0.05):
        P = Partition.uniform(1.0, d)
        err[d] = [np.sqrt(np.mean((f(m, b, P).value - o) ** 2)) for f in (log_weight_picard, log_weight_order2)]
    assert err[0.05][1] < err[0.2][1] / 2.5  # order2 pathwise ~ δ
    assert err[0.05][0] < err[0.2][0]
    assert err[0.05][1] < err[0.05][0]


def test_non_finite_weight_reports_path():
    m = bounded_model()
    b = sample_bundle(m, Partition.uniform(1.0, 0.5), 2, 0, n_paths=5)
    bad = with_oracle(m, h=lambda x: np.where(x > 1e9, 0.0, np.full_like(x, np.nan)))
    with pytest.raises(NumericError) as exc:
        log_weight_oracle(bad, b)
    assert exc.value.where == {"path": 0}
    with pytest.raises(NumericError):
        LogWeight(np.array([0.0, np.inf]), "order2")


def test_recursive_update_bitwise(bundle):
    m = bounded_model()
    full = Partition([0.0, 0.5, 1.0])
    one_shot = log_weight_order2(m, bundle, full)
    head = log_weight_order2(m, bundle, Partition([0.0, 0.5]))
    np.testing.assert_array_equal(update_recursive(head, m, bundle, full).value, one_shot.value)


def test_recursive_update_empty_extension(bundle):
    m = bounded_model()
    P = Partition([0.0, 0.5, 1.0])
    lw = log_weight_picard(m, bundle, P)
    np.testing.assert_array_equal(update_recursive(lw, m, bundle, P).value, lw.value)


def test_recursive_update_chain_ten_intervals(bundle):
    m = bounded_model()
    P = Partition.uniform(1.0, 0.1)
    lw = log_weight_order2(m, bundle, Partition(P.points[:2]))
    for k in range(3, P.points.size + 1):
        lw = update_recursive(lw, m, bundle, Partition(P.points[:k]))
    assert np.max(np.abs(lw.value - log_weight_order2(m, bundle, P).value)) <= 1e-13


def test_recursive_update_prefix_mismatch(bundle):
    m = bounded_model()
    lw = log_weight_order2(m, bundle, Partition([0.0, 0.4]))
    with pytest.raises(DomainError):
        update_recursive(lw, m, bundle, Partition([0.0, 0.5, 1.0]))
    with pytest.raises(DomainError):
        update_recursive(log_weight_oracle(m, bundle), m, bundle, Partition([0.0, 1.0]))


@settings(max_examples=15, deadline=None)
@given(st.lists(st.integers(1, 79), min_size=1, max_size=8, unique=True), st.integers(1, 8))
def test_recursivity_random_partitions(cuts, split):
    m = bounded_model()
    b = _recursive_bundle()
    pts = np.concatenate([[0.0], b.times[sorted(cuts)], [1.0]])
    P = Partition(pts)
    split = min(split, P.n_intervals)
    lw = log_weight_order2(m, b, Partition(pts[:split + 1]))
    lw = update_recursive(lw, m, b, P)
    np.testing.assert_array_equal(lw.value, log_weight_order2(m, b, P).value)


_cache = {}


def _recursive_bundle():
    if "b" not in _cache:
        _cache["b"] = sample_bundle(bounded_model(), Partition.uniform(1.0, 0.1), 8, (9, 9), n_paths=100)
    return _cache["b"]


def test_xi_nesting_bitwise(bundle):
    m = bounded_model()
    P = bundle.partition
    np.testing.assert_array_equal(xi_general(m, bundle, P, 1).total(), log_weight_picard(m, bundle, P).value)
    np.testing.assert_array_equal(xi_general(m, bundle, P, 2).total(), log_weight_order2(m, bundle, P).value)


def test_xi_components_shape_and_zero_component(bundle):
    m = bounded_model()
    xi = xi_general(m, bundle, bundle.partition, 2)
    assert xi.components.shape == (bundle.n_paths, 2)
    np.testing.assert_allclose(xi.components.sum(axis=1), xi.total(), atol=1e-12)


def test_xi_order3_constant_sensor_equals_order1():
    m = const_model(c=1.3)
    P = Partition.uniform(1.0, 0.25)
    b = sample_bundle(m, P, 4, 2, n_paths=20)
    np.testing.assert_allclose(xi_general(m, b, P, 3).components, xi_general(m, b, P, 1).components,
                               rtol=0, atol=1e-12)


def test_xi_order3_is_never_exponentiated(bundle):
    m = bounded_model()
    xi = xi_general(m, bundle, bundle.partition, 3)
    assert np.all(np.isfinite(xi.components))
    with pytest.raises(UnboundedMomentError, match="does not have finite exponential moments"):
        xi.exponentiate()
    np.testing.assert_allclose(xi_general(m, bundle, bundle.partition, 2).exponentiate(),
                               np.exp(log_weight_order2(m, bundle, bundle.partition).value))


def test_xi_order3_extra_terms_are_small(bundle):
    # the |α| = 2 corrections are of the order of the order-2 pathwise error
    m = bounded_model()
    P = bundle.partition
    o = log_weight_oracle(m, bundle).value
    e2 = np.sqrt(np.mean((xi_general(m, bundle, P, 2).total() - o) ** 2))
    e3 = np.sqrt(np.mean((xi_general(m, bundle, P, 3).total() - o) ** 2))
    assert e3 < 1.5 * e2


@pytest.mark.parametrize("m", [0, 4])
def test_xi_order_limits(bundle, m):
    with pytest.raises(UnsupportedOrderError):
        xi_general(bounded_model(), bundle, bundle.partition, m)


def test_near_martingale_order2():
    m = bounded_model()
    n = 10**5
    b = sample_bundle(m, Partition.uniform(1.0, 0.1), 4, (2, 2), n_paths=n)
    z = np.exp(log_weight_order2(m, b, b.partition).value)
    assert abs(z.mean() - 1.0) <= 4 * z.std(ddof=1) / np.sqrt(n)


def test_mesh_guard_examples():
    m = bounded_model()
    v = mesh_guard(1.0, m, 0.49)
    assert v.delta0 == 0.5 and v.ok and v.lh_bound_flag == "declared"
    assert not mesh_guard(1.0, m, 0.5).ok
    v = mesh_guard(2.0, m, 0.3)
    assert v.delta0 == 0.25 and not v.ok
    c = mesh_guard(2.0, const_model(), 1e6)
    assert c.delta0 == np.inf and c.ok
    with pytest.raises(DomainError):
        mesh_guard(0.5, m, 0.1)


@given(st.floats(1, 10), st.floats(0.01, 10), st.integers(1, 4), st.integers(1, 4),
       st.floats(0.001, 1.0))
def test_mesh_guard_monotone(p, bound, dy, dv, delta):
    m = bounded_model()
    base = mesh_guard(p, m, delta, dy, dv, LhBound(bound, "declared"))
    assert base.ok == (delta < base.delta0)
    for v in (mesh_guard(p * 1.5, m, delta, dy, dv, LhBound(bound, "declared")),
              mesh_guard(p, m, delta, dy, dv, LhBound(bound * 1.5, "declared")),
              mesh_guard(p, m, delta, dy + 1, dv, LhBound(bound, "declared")),
              mesh_guard(p, m, delta, dy, dv + 1, LhBound(bound, "declared"))):
        assert v.delta0 <= base.delta0
