"""Nested Monte Carlo estimates of the unnormalised and normalised filter.

For one observation path ``Y`` (an *outer* path), ``n_inner`` signal paths
are drawn and every functional is evaluated on the same paths:

    rho(phi) ≈ mean_k phi(X^k_t) exp(logW^k),   pi(phi) = rho(phi) / rho(1).

Error studies difference each coarse scheme against the fine-grid oracle on
identical inner paths (common random numbers), take the ``L_p`` norm over
outer paths and fit the log-log slope against the mesh.

Work is split into blocks of ``BLOCK_SIZE`` inner paths.  Each block draws
its noise from the key ``(master_seed, outer, block)``, so results do not
depend on the number of worker processes.
"""

from __future__ import annotations

import logging
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateNormalizationError, DomainError, GuardError
from .functionals import ORACLE, ORDER2, PICARD1, coarse_log_weights, log_weight_oracle, mesh_guard
from .model import ScalarFunction, SignalModel
from .paths import Partition, make_rng, node_indices, sample_bundle, sample_observation, simulate_signal

log = logging.getLogger(__name__)

BLOCK_SIZE = 4096
STREAM_BOOTSTRAP = 7
EXACT_TOL = 1e-12


# --------------------------------------------------------------------------
# fine grids shared by several partitions


def common_fine_grid(partitions: Sequence[Partition], M: int):
    """Refine the finest partition ``M`` times and check every partition sits on it.

    Returns ``(base_partition, fine_times)``.
    """
    if not partitions:
        raise DomainError("need at least one partition")
    t = partitions[0].t
    for part in partitions:
        if abs(part.t - t) > 1e-12 * max(1.0, t):
            raise DomainError("all partitions must share the same horizon")
    base = min(partitions, key=lambda q: q.mesh)
    times = base.refine(M)
    for part in partitions:
        node_indices(times, part)
    return base, times


def _block_sizes(n_inner):
    sizes = [BLOCK_SIZE] * (n_inner // BLOCK_SIZE)
    if n_inner % BLOCK_SIZE:
        sizes.append(n_inner % BLOCK_SIZE)
    return sizes


def _run_block(task):
    """Log-weights of every functional on one block of inner paths."""
    model, phi, base, M, partitions, schemes, outer_key, b, n = task
    times = base.refine(M)
    dY = sample_observation(times, model.d_Y, outer_key)
    bundle = sample_bundle(model, base, M, tuple(outer_key) + (b,), n_paths=n, dY=dY)
    out = {ORACLE: log_weight_oracle(model, bundle).value}
    for q, part in enumerate(partitions):
        for s, lw in coarse_log_weights(model, bundle, part, schemes).items():
            out[(s, q)] = lw.value
    out["phi"] = np.asarray(phi(bundle.X[:, -1]), dtype=float)
    return out


def _map(tasks, workers):
    if workers <= 1:
        for task in tasks:
            yield _run_block(task)
        return
    ctx = mp.get_context("fork")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        yield from pool.map(_run_block, tasks, chunksize=1)


def _gather(blocks):
    keys = blocks[0].keys()
    return {k: np.concatenate([blk[k] for blk in blocks]) for k in keys}


# --------------------------------------------------------------------------
# single-observation estimates


@dataclass
class ConditionalEstimate:
    rho_phi: float
    rho_one: float
    pi_phi: float
    n_inner: int
    std_error_rho_phi: float
    std_error_pi_phi: float = float("nan")
    log_rho_one: float = float("nan")


def _weighted(phi_vals, lw):
    """ConditionalEstimate from per-path test-function values and log-weights.

    Weights are shifted by their maximum before exponentiation.  ``pi_phi``
    and ``log_rho_one`` are always finite; ``rho_*`` overflow to ``inf``
    once ``log rho`` exceeds about 709.
    """
    n = lw.size
    c = float(np.max(lw))
    if not np.isfinite(c):
        raise DegenerateNormalizationError("no inner path carries a finite positive weight")
    log_rho_one = float(logsumexp(lw) - np.log(n))
    w = np.exp(lw - c)
    rho_one_s = w.mean()
    if not rho_one_s > 0:
        raise DegenerateNormalizationError("estimated rho(1) is not positive")
    rho_phi_s = np.mean(phi_vals * w)
    se_s = np.std(phi_vals * w, ddof=1) / np.sqrt(n)
    pi = float(np.sum(phi_vals * w) / np.sum(w))
    infl = (phi_vals - pi) * w / rho_one_s
    with np.errstate(over="ignore"):
        scale = np.exp(c)
    return ConditionalEstimate(
        rho_phi=float(rho_phi_s * scale), rho_one=float(rho_one_s * scale), pi_phi=pi,
        n_inner=n, std_error_rho_phi=float(se_s * scale),
        std_error_pi_phi=float(np.std(infl, ddof=1) / np.sqrt(n)), log_rho_one=log_rho_one,
    )


def estimate_conditional(model: SignalModel, phi: ScalarFunction, y_path_seed, partition: Partition,
                         scheme: str = ORDER2, n_inner: int = 10**5, M: int = 8,
                         strict: bool = False, guard_p: float = 1.0, workers: int = 1) -> ConditionalEstimate:
    """Estimate ``rho_t(phi)``, ``rho_t(1)`` and ``pi_t(phi)`` for one observation path.

    The observation is drawn from ``y_path_seed``; the inner paths from
    ``(y_path_seed, block)``.  ``scheme`` is one of ``oracle``, ``picard1``,
    ``order2``.
    """
    if n_inner < 2:
        raise DomainError("n_inner must be >= 2")
    if scheme == ORDER2 and strict:
        verdict = mesh_guard(guard_p, model, partition.mesh)
        if not verdict.ok:
            raise GuardError(verdict)
    key = (y_path_seed,) if np.isscalar(y_path_seed) else tuple(y_path_seed)
    schemes = () if scheme == ORACLE else (scheme,)
    tasks = [(model, phi, partition, M, [partition], schemes, key, b, n)
             for b, n in enumerate(_block_sizes(n_inner))]
    data = _gather(list(_map(tasks, workers)))
    lw = data[ORACLE] if scheme == ORACLE else data[(scheme, 0)]
    return _weighted(data["phi"], lw)


def estimate_all(model, phi, y_path_seed, partition, n_inner=10**5, M=8, workers=1) -> Dict[str, ConditionalEstimate]:
    """Oracle, Picard and order-2 estimates on the same inner paths."""
    key = (y_path_seed,) if np.isscalar(y_path_seed) else tuple(y_path_seed)
    tasks = [(model, phi, partition, M, [partition], (PICARD1, ORDER2), key, b, n)
             for b, n in enumerate(_block_sizes(n_inner))]
    data = _gather(list(_map(tasks, workers)))
    return {
        ORACLE: _weighted(data["phi"], data[ORACLE]),
        PICARD1: _weighted(data["phi"], data[(PICARD1, 0)]),
        ORDER2: _weighted(data["phi"], data[(ORDER2, 0)]),
    }


# --------------------------------------------------------------------------
# rate fitting


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    slope_lo: float
    slope_hi: float


def _ols(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xm = x.mean()
    slope = np.sum((x - xm) * (y - y.mean())) / np.sum((x - xm) ** 2)
    return slope, y.mean() - slope * xm


def fit_rate(deltas, errors, samples=None, p: float = 2.0, n_boot: int = 1000, seed=0,
             level: float = 0.95) -> RateFit:
    """Least-squares slope of ``log error`` against ``log delta``.

    ``samples`` (shape ``(K, n_outer)``, entries ``|d_rho|^p``) enables a
    percentile bootstrap over outer paths; without it the interval collapses
    to the point estimate.
    """
    deltas = np.asarray(deltas, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if deltas.size < 3 or deltas.size != errors.size:
        raise DomainError("fit_rate needs at least three (delta, error) points")
    if np.any(errors <= 0) or np.any(deltas <= 0):
        raise DomainError("errors must be positive; an exact scheme has no rate to fit")
    slope, icpt = _ols(np.log(deltas), np.log(errors))
    if samples is None:
        return RateFit(float(slope), float(icpt), float(slope), float(slope))
    boot = bootstrap_lp(samples, p, n_boot, seed)
    slopes = np.array([_ols(np.log(deltas), np.log(row))[0] for row in boot if np.all(row > 0)])
    a = 100 * (1 - level) / 2
    lo, hi = np.percentile(slopes, [a, 100 - a])
    return RateFit(float(slope), float(icpt), float(lo), float(hi))


def bootstrap_lp(samples, p, n_boot, seed):
    """Bootstrap replicates ``(n_boot, K)`` of the ``L_p`` error over outer paths."""
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[1]
    rng = make_rng(seed, STREAM_BOOTSTRAP)
    idx = rng.integers(0, n, size=(n_boot, n))
    return np.mean(samples[:, idx], axis=-1).T ** (1.0 / p)


# --------------------------------------------------------------------------
# L_p error studies


@dataclass
class RateReport:
    scheme: str
    quantity: str  # "rho" or "pi"
    deltas: np.ndarray
    lp_error: np.ndarray
    lp_stderr: np.ndarray
    inner_stderr: np.ndarray
    guard_ok: List[bool]
    fit: Optional[RateFit]
    exact: bool
    unresolved: bool
    p: float
    n_outer: int
    n_inner: int

    @property
    def slope(self):
        return None if self.fit is None else self.fit.slope


@dataclass
class StudyResult:
    reports: List[RateReport]
    d_rho: Dict[str, np.ndarray] = field(repr=False)  # scheme -> (K, n_outer)
    d_pi: Dict[str, np.ndarray] = field(repr=False)
    inner_se_rho: Dict[str, np.ndarray] = field(repr=False)
    rho_oracle: np.ndarray = field(repr=False, default=None)  # (n_outer,)
    guard: list = field(default_factory=list)

    def report(self, scheme, quantity="rho") -> RateReport:
        for r in self.reports:
            if r.scheme == scheme and r.quantity == quantity:
                return r
        raise KeyError((scheme, quantity))

    @property
    def unresolved(self) -> bool:
        return any(r.unresolved for r in self.reports if r.quantity == "rho")


def _outer_differences(data, schemes, n_part):
    """Per-outer error samples of every scheme against the oracle (common paths)."""
    phi = data["phi"]
    lw_o = data[ORACLE]
    n = lw_o.size
    c = float(np.max(lw_o))
    w_o = np.exp(lw_o - c)
    scale = np.exp(c)
    rho_o = np.mean(phi * w_o)
    pi_o = np.sum(phi * w_o) / np.sum(w_o)
    mean_wo = np.mean(w_o)
    out = {}
    for s in schemes:
        res = np.empty((n_part, 4))
        for q in range(n_part):
            w_s = np.exp(data[(s, q)] - c)
            diff = phi * (w_s - w_o)
            pi_s = np.sum(phi * w_s) / np.sum(w_s)
            infl = (phi - pi_s) * w_s / np.mean(w_s) - (phi - pi_o) * w_o / mean_wo
            res[q] = (np.mean(diff) * scale, np.std(diff, ddof=1) / np.sqrt(n) * scale,
                      pi_s - pi_o, np.std(infl, ddof=1) / np.sqrt(n))
        out[s] = res
    return out, rho_o * scale


def lp_error_study(model: SignalModel, phi: ScalarFunction, p: float, partitions: Sequence[Partition],
                   n_outer: int, n_inner: int, M: int, schemes=(ORDER2, PICARD1), master_seed: int = 0,
                   workers: int = 1, strict_guard: bool = False, guard_p: Optional[float] = None,
                   n_boot: int = 1000) -> StudyResult:
    """``L_p`` errors of ``rho_t(phi)`` and ``pi_t(phi)`` for each scheme and mesh.

    Every outer path draws a fresh observation; its inner paths are shared by
    all partitions and schemes.  ``M`` refines the finest partition; the
    other partitions must lie on the resulting grid.
    """
    if p < 1:
        raise DomainError("p must be >= 1")
    if n_outer < 2 or n_inner < 2:
        raise DomainError("n_outer and n_inner must be >= 2")
    partitions = list(partitions)
    base, _ = common_fine_grid(partitions, M)
    M_base = M
    guard_p = p if guard_p is None else guard_p
    verdicts = [mesh_guard(guard_p, model, part.mesh) for part in partitions]
    if strict_guard:
        for v in verdicts:
            if not v.ok:
                raise GuardError(v)
    sizes = _block_sizes(n_inner)
    tasks = [(model, phi, base, M_base, partitions, tuple(schemes), (master_seed, o), b, n)
             for o in range(n_outer) for b, n in enumerate(sizes)]
    K = len(partitions)
    per_outer = {s: np.empty((n_outer, K, 4)) for s in schemes}
    rho_oracle = np.empty(n_outer)
    results = _map(tasks, workers)
    for o in range(n_outer):
        blocks = [next(results) for _ in sizes]
        diffs, rho_oracle[o] = _outer_differences(_gather(blocks), schemes, K)
        for s in schemes:
            per_outer[s][o] = diffs[s]
        log.debug("outer path %d/%d done", o + 1, n_outer)

    deltas = np.array([part.mesh for part in partitions])
    reports, d_rho, d_pi, se_rho = [], {}, {}, {}
    for s in schemes:
        d_rho[s] = per_outer[s][:, :, 0].T
        d_pi[s] = per_outer[s][:, :, 2].T
        se_rho[s] = per_outer[s][:, :, 1].T
        for quantity, d, se in (("rho", d_rho[s], se_rho[s]), ("pi", d_pi[s], per_outer[s][:, :, 3].T)):
            reports.append(_rate_report(s, quantity, deltas, d, se, p, verdicts, rho_oracle,
                                        n_inner, n_boot, master_seed))
    return StudyResult(reports, d_rho, d_pi, se_rho, rho_oracle, verdicts)


def _rate_report(scheme, quantity, deltas, d, se, p, verdicts, rho_oracle, n_inner, n_boot, seed):
    samples = np.abs(d) ** p
    lp = np.mean(samples, axis=1) ** (1.0 / p)
    boot = bootstrap_lp(samples, p, n_boot, seed)
    lp_se = np.std(boot, axis=0, ddof=1)
    inner = np.sqrt(np.mean(se ** 2, axis=1))
    ref = 1.0 + np.abs(rho_oracle) if quantity == "rho" else 1.0
    exact = bool(np.all(np.abs(d) <= EXACT_TOL * ref))
    fit, unresolved = None, False
    if not exact:
        finest = int(np.argmin(deltas))
        unresolved = bool(inner[finest] >= lp[finest] / 3.0)
        if len(deltas) >= 3 and np.all(lp > 0):
            fit = fit_rate(deltas, lp, samples, p, n_boot, seed)
    return RateReport(scheme, quantity, deltas, lp, lp_se, inner, [v.ok for v in verdicts],
                      fit, exact, unresolved, p, d.shape[1], n_inner)
