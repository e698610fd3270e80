import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import scalar_model
from ksfilter.errors import DomainError
from ksfilter.model import bounded_model, linear_model
from ksfilter.multiindex import MultiIndex
from ksfilter.paths import (Partition, exp_moment_bound_check, interval_increments, iterated_integral,
                            make_rng, refine_bundle, sample_bundle, sample_observation)


def test_partition_validation():
    with pytest.raises(DomainError):
        Partition([0.0, 0.5, 0.5, 1.0])
    with pytest.raises(DomainError):
        Partition([0.1, 1.0])
    with pytest.raises(DomainError):
        Partition.uniform(1.0, 0.3)
    P = Partition([0.0, 0.2, 0.7, 1.0])
    assert P.mesh == pytest.approx(0.5)
    assert P.mesh == np.max(np.diff(P.points))


def test_tau_of_examples():
    P = Partition([0.0, 0.5, 1.0])
    assert P.tau_of(0.7) == 0.5
    assert P.tau_of(0.0) == 0.0
    assert P.tau_of(0.5) == 0.5
    assert P.tau_of(1.0) == 0.5
    for s in (-0.1, 1.01):
        with pytest.raises(DomainError):
            P.tau_of(s)


@given(st.floats(0.0, 1.0))
def test_tau_of_is_largest_point_below(s):
    P = Partition.uniform(1.0, 0.125)
    tau = P.tau_of(s)
    assert tau <= s and tau in P.points and tau < 1.0
    assert s - tau <= P.mesh


def test_refine_contains_partition():
    P = Partition([0.0, 0.3, 1.0])
    fine = P.refine(4)
    assert fine.size == 9
    assert set(P.points) <= set(fine)


def test_degenerate_sde_stays_put():
    m = scalar_model(lambda x: np.zeros_like(x), lambda x: np.zeros_like(x[..., 0]), x0=0.7)
    b = sample_bundle(m, Partition.uniform(1.0, 0.25), 4, 3, n_paths=5)
    np.testing.assert_array_equal(b.X, 0.7)


def test_brownian_variance():
    n = 10**5
    b = sample_bundle(bounded_model(), Partition([0.0, 1.0]), 8, 11, n_paths=n)
    total = b.dV.sum(axis=1)[:, 0]
    assert abs(np.var(total) - 1.0) <= 3 * np.sqrt(2.0 / n)
    assert abs(np.var(b.dY.sum(axis=1)[:, 0]) - 1.0) <= 3 * np.sqrt(2.0 / n)


def test_bundle_is_deterministic_and_streams_differ():
    P = Partition.uniform(1.0, 0.1)
    a = sample_bundle(bounded_model(), P, 4, (5, 1), n_paths=10)
    b = sample_bundle(bounded_model(), P, 4, (5, 1), n_paths=10)
    c = sample_bundle(bounded_model(), P, 4, (5, 2), n_paths=10)
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.dY, b.dY)
    assert not np.array_equal(a.dV, c.dV)
    assert not np.allclose(a.dV / np.sqrt(a.dt[0]), a.dY / np.sqrt(a.dt[0]))


def test_observation_stream_matches_bundle():
    P = Partition.uniform(1.0, 0.1)
    b = sample_bundle(bounded_model(), P, 4, (8, 0), n_paths=3)
    np.testing.assert_array_equal(b.dY, sample_observation(b.times, 1, (8, 0), 3))


def test_rng_streams_independent_of_order():
    x = make_rng((1, 2), 0).standard_normal(4)
    make_rng((1, 3), 0).standard_normal(100)
    np.testing.assert_array_equal(x, make_rng((1, 2), 0).standard_normal(4))


def test_coarse_index_map():
    P = Partition([0.0, 0.25, 1.0])
    b = sample_bundle(bounded_model(), Partition([0.0, 0.25, 0.5, 0.75, 1.0]), 2, 0)
    b.partition = P
    np.testing.assert_array_equal(b.coarse_index_map, [0, 0, 1, 1, 1, 1, 1, 1])


def test_increments_single_substep_collapse():
    b = sample_bundle(bounded_model(), Partition.uniform(1.0, 0.1), 1, 4, n_paths=7)
    inc = interval_increments(b, b.partition)
    np.testing.assert_array_equal(inc.A[..., 1:], 0.0)
    np.testing.assert_array_equal(inc.B[:, :, 1:], 0.0)
    np.testing.assert_array_equal(inc.A[..., 0], 0.0)


def test_increments_deterministic_components():
    M = 8
    P = Partition([0.0, 0.2, 0.5, 1.0])
    b = sample_bundle(bounded_model(), P, M, 2, n_paths=4)
    inc = interval_increments(b, P)
    np.testing.assert_array_equal(inc.deltaY[..., 0], np.broadcast_to(P.deltas, (4, 3)))
    want = P.deltas ** 2 / 2 * (1 - 1 / M)
    np.testing.assert_allclose(inc.A[0, :, 0], want, rtol=1e-13)
    # B^{0,r} is the left-point time integral of V - V_{t_j}
    k0, k1 = 8, 16
    V = b.V[:, :, 0]
    ref = np.sum((V[:, k0:k1] - V[:, k0:k0 + 1]) * b.dt[k0:k1], axis=1)
    np.testing.assert_allclose(inc.B[:, 1, 0, 0], ref, rtol=1e-12)


def test_increments_match_direct_sums():
    P = Partition.uniform(1.0, 0.25)
    b = sample_bundle(bounded_model(), P, 5, 9, n_paths=3)
    inc = interval_increments(b, P)
    j, k0, k1 = 2, 10, 15
    dY, V = b.dY[:, k0:k1, 0], b.V[:, :, 0]
    np.testing.assert_allclose(inc.deltaY[:, j, 1], dY.sum(axis=1))
    np.testing.assert_allclose(inc.A[:, j, 1], np.sum((b.times[k0:k1] - 0.5) * dY, axis=1))
    np.testing.assert_allclose(inc.B[:, j, 1, 0], np.sum((V[:, k0:k1] - V[:, [k0]]) * dY, axis=1))


def test_increments_partition_mismatch():
    b = sample_bundle(bounded_model(), Partition.uniform(1.0, 0.1), 2, 0)
    with pytest.raises(DomainError):
        interval_increments(b, Partition([0.0, 0.33, 1.0]))
    with pytest.raises(DomainError):
        interval_increments(b, Partition([0.0, 1.0, 2.0]))


def test_increment_covariances_finite_refinement():
    # left-point sums on M sub-steps: the continuous limits times (1 - 1/M) factors
    d, M, n = 0.1, 64, 10**5
    b = sample_bundle(bounded_model(), Partition([0.0, d]), M, (1, 6), n_paths=n)
    inc = interval_increments(b, b.partition)
    dy, A, B = inc.deltaY[:, 0, 1], inc.A[:, 0, 1], inc.B[:, 0, 1, 0]
    cov_target = d * d / 2 * (1 - 1 / M)
    varA_target = d ** 3 / 3 * (1 - 1 / M) * (1 - 1 / (2 * M))
    varB_target = d * d / 2 * (1 - 1 / M)
    assert abs(np.var(dy) - d) <= 3 * np.sqrt(2 / n) * d
    assert abs(np.mean(dy * A) - cov_target) <= 3 * np.std(dy * A) / np.sqrt(n)
    assert abs(np.var(A) - varA_target) <= 3 * np.std(A * A) / np.sqrt(n)
    assert abs(np.mean(B * B) - varB_target) <= 3 * np.std(B * B) / np.sqrt(n)


def test_iterated_integral_closed_forms():
    M = 16
    P = Partition([0.0, 0.3, 1.0])
    b = sample_bundle(bounded_model(), P, M, 1, n_paths=2)
    np.testing.assert_allclose(iterated_integral(b, (0,), 1), 0.7, rtol=1e-14)
    np.testing.assert_allclose(iterated_integral(b, (0, 0), 0), 0.09 / 2 * (1 - 1 / M), rtol=1e-13)
    inc = interval_increments(b, P)
    np.testing.assert_allclose(iterated_integral(b, (1,), 1), b.V[:, -1, 0] - b.V[:, M, 0])
    np.testing.assert_allclose(iterated_integral(b, (1, 0), 1), inc.B[:, 1, 0, 0], rtol=1e-12)


def test_iterated_integral_brownian_square():
    d, n = 0.1, 10**5
    b = sample_bundle(bounded_model(), Partition([0.0, d]), 64, 2, n_paths=n)
    I = iterated_integral(b, MultiIndex((1, 1)), 0)
    assert abs(I.mean()) <= 3 * I.std() / np.sqrt(n)
    assert abs(np.var(I) - d * d / 2 * (1 - 1 / 64)) <= 3 * np.std(I * I) / np.sqrt(n)
    # discrete Itô identity: I_(1,1) = (W^2 - sum dW^2) / 2
    W = b.dV[:, :, 0]
    np.testing.assert_allclose(I, (W.sum(1) ** 2 - (W * W).sum(1)) / 2, atol=1e-14)


def test_iterated_integral_domain():
    b = sample_bundle(bounded_model(), Partition([0.0, 1.0]), 4, 0)
    with pytest.raises(DomainError):
        iterated_integral(b, (2,), 0)
    with pytest.raises(DomainError):
        iterated_integral(b, (), 0)


def test_refinement_preserves_coarse_increments():
    m = bounded_model()
    b = sample_bundle(m, Partition.uniform(1.0, 0.2), 4, 7, n_paths=50)
    r = refine_bundle(m, b)
    assert r.n_fine == 2 * b.n_fine
    np.testing.assert_allclose(r.dV[:, 0::2] + r.dV[:, 1::2], b.dV, atol=1e-15)
    np.testing.assert_allclose(r.dY[:, 0::2] + r.dY[:, 1::2], b.dY, atol=1e-15)
    np.testing.assert_array_equal(r.X[:, 0], b.X[:, 0])


def test_refinement_consistency_rms_decreases():
    m = bounded_model()
    b = sample_bundle(m, Partition.uniform(1.0, 0.1), 2, 3, n_paths=1000)
    prev = interval_increments(b, b.partition)
    rms = []
    for _ in range(4):
        b = refine_bundle(m, b)
        cur = interval_increments(b, b.partition)
        rms.append(np.sqrt(np.mean((cur.B - prev.B) ** 2)))
        prev = cur
    assert all(a > c for a, c in zip(rms, rms[1:]))
    # B differences shrink like M^{-1/2}
    assert rms[0] / rms[-1] == pytest.approx(np.sqrt(8), rel=0.2)


def test_exp_moment_examples():
    zero = exp_moment_bound_check(0.0, 3.0)
    assert (zero.passed, zero.estimate, zero.std_error, zero.bound) == (True, 1.0, 0.0, 1.0)
    res = exp_moment_bound_check(1.0, 0.5, N=10**5, M=64, seed=0)
    assert res.passed and res.bound == pytest.approx(np.sqrt(2))
    # exact value (cos(δ sqrt(2β)))^{-1/2}
    assert res.estimate == pytest.approx(np.cos(0.5 * np.sqrt(2)) ** -0.5, abs=4 * res.std_error + 5e-3)
    with pytest.raises(DomainError):
        exp_moment_bound_check(1.0, 0.8)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(0.05, 0.6))
def test_exp_moment_bound_holds_inside_domain(beta, delta):
    if 2 * beta * delta * delta >= 0.95:
        with pytest.raises(DomainError) if 2 * beta * delta * delta >= 1 else _null():
            exp_moment_bound_check(beta, delta, N=2000, M=16)
        return
    assert exp_moment_bound_check(beta, delta, N=2000, M=16).passed


class _null:
    def __enter__(self):
        return self

    def __exit__(self, *a):
        return False


def test_linear_model_exact_step_used():
    m = linear_model()
    b = sample_bundle(m, Partition([0.0, 1.0]), 1, 0, n_paths=100_000)
    assert np.var(b.X[:, -1, 0]) == pytest.approx(0.5 + 0.5 * np.exp(-2.0), rel=0.02)
