"""Time partitions, fine-grid path simulation and per-interval stochastic integrals.

The signal is simulated on a fine grid which refines every coarse partition
of interest, and every functional is evaluated on that same fine path.  All
stochastic integrals are left-point (Itô) Riemann sums on the fine grid.

Random streams are counter-based (Philox) and keyed by a tuple
``(master_seed, *path_key, stream_id)``, so a bundle depends only on its key
and never on how work is split between processes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError
from .multiindex import MultiIndex

STREAM_V = 0
STREAM_Y = 1
STREAM_X0 = 2
STREAM_REFINE = 3

_GRID_TOL = 1e-12


def make_rng(key, stream: int) -> np.random.Generator:
    """Philox generator for ``key + (stream,)``; ``key`` is an int or int tuple."""
    key = (key,) if np.isscalar(key) else tuple(key)
    ints = [int(k) for k in key]
    seq = np.random.SeedSequence(entropy=ints[0], spawn_key=tuple(ints[1:]) + (stream,))
    return np.random.Generator(np.random.Philox(seq))


class Partition:
    """Strictly increasing grid ``0 = t_0 < ... < t_n = t``."""

    def __init__(self, points: Sequence[float]):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise DomainError("a partition needs at least two points")
        if pts[0] != 0.0:
            raise DomainError(f"partition must start at 0, got {pts[0]}")
        if np.any(np.diff(pts) <= 0.0):
            raise DomainError("partition points must be strictly increasing")
        self.points = pts
        self.points.setflags(write=False)

    @classmethod
    def uniform(cls, t: float, delta: float) -> "Partition":
        n = t / delta
        n_int = int(round(n))
        if n_int < 1 or abs(n - n_int) > 1e-12 * max(1.0, n):
            raise DomainError(f"horizon {t} is not a multiple of mesh {delta}")
        return cls(np.linspace(0.0, t, n_int + 1))

    def __len__(self):
        return self.points.size

    def __repr__(self):
        return f"Partition(n={self.n_intervals}, t={self.t:g}, mesh={self.mesh:g})"

    def __eq__(self, other):
        return isinstance(other, Partition) and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash(self.points.tobytes())

    @property
    def t(self) -> float:
        return float(self.points[-1])

    @property
    def n_intervals(self) -> int:
        return self.points.size - 1

    @property
    def deltas(self) -> np.ndarray:
        return np.diff(self.points)

    @property
    def mesh(self) -> float:
        return float(np.max(self.deltas))

    def tau_of(self, s: float) -> float:
        """Largest partition point ``<= s``; ``s = t`` maps to ``t_{n-1}``."""
        if s < 0.0 or s > self.t:
            raise DomainError(f"time {s} outside [0, {self.t}]")
        i = int(np.searchsorted(self.points, s, side="right")) - 1
        return float(self.points[min(i, self.n_intervals - 1)])

    def is_prefix_of(self, other: "Partition") -> bool:
        n = self.points.size
        return n <= other.points.size and np.array_equal(self.points, other.points[:n])

    def refine(self, M: int) -> np.ndarray:
        """Fine nodes: each interval split into ``M`` equal sub-steps."""
        if M < 1:
            raise DomainError(f"refinement factor must be >= 1, got {M}")
        pieces = [np.linspace(a, b, M + 1)[:-1] for a, b in zip(self.points[:-1], self.points[1:])]
        return np.concatenate(pieces + [self.points[-1:]])


@dataclass
class PathBundle:
    """Fine-grid increments of ``(V, Y)`` and the signal path, for ``n_paths`` paths.

    ``dY`` may have leading dimension 1 when one observation path is shared
    by all signal paths.
    """

    times: np.ndarray  # (n_fine + 1,)
    dV: np.ndarray  # (P, n_fine, d_V)
    dY: np.ndarray  # (P or 1, n_fine, d_Y)
    X: np.ndarray  # (P, n_fine + 1, d_X)
    partition: Partition
    key: tuple = ()

    @property
    def n_paths(self) -> int:
        return self.X.shape[0]

    @property
    def n_fine(self) -> int:
        return self.times.size - 1

    @cached_property
    def dt(self) -> np.ndarray:
        return np.diff(self.times)

    @cached_property
    def V(self) -> np.ndarray:
        """Cumulative noise path ``(P, n_fine + 1, d_V)`` with ``V_0 = 0``."""
        P, _, d = self.dV.shape
        out = np.zeros((P, self.n_fine + 1, d))
        np.cumsum(self.dV, axis=1, out=out[:, 1:])
        return out

    @cached_property
    def coarse_index_map(self) -> np.ndarray:
        """Index of the enclosing interval of ``self.partition`` for each fine step."""
        nodes = node_indices(self.times, self.partition)
        return np.searchsorted(nodes, np.arange(self.n_fine), side="right") - 1

    def dY_aug(self, k0: int, k1: int) -> np.ndarray:
        """Observation increments on steps ``k0:k1`` with ``dY^0 = ds`` prepended."""
        dY = self.dY[:, k0:k1]
        ds = np.broadcast_to(self.dt[k0:k1, None], dY.shape[:2] + (1,))
        return np.concatenate([ds, dY], axis=-1)


def node_indices(times: np.ndarray, partition: Partition) -> np.ndarray:
    """Fine-node index of every partition point; the partition must sit on the grid."""
    idx = np.searchsorted(times, partition.points - _GRID_TOL * max(1.0, times[-1]))
    idx = np.minimum(idx, times.size - 1)
    if np.any(np.abs(times[idx] - partition.points) > _GRID_TOL * max(1.0, times[-1])):
        raise DomainError("partition points do not lie on the bundle's fine grid")
    return idx


def simulate_signal(model, x0: np.ndarray, times: np.ndarray, dV: np.ndarray) -> np.ndarray:
    """Signal states at every fine node, driven by ``dV``."""
    P = x0.shape[0]
    X = np.empty((P, times.size, model.d_X))
    X[:, 0] = x0
    dts = np.diff(times)
    for k in range(dts.size):
        X[:, k + 1] = model.step(X[:, k], dts[k], dV[:, k])
    return X


def sample_observation(times: np.ndarray, d_Y: int, key, n_paths: int = 1) -> np.ndarray:
    """Brownian observation increments ``(n_paths, n_fine, d_Y)`` under the reference measure."""
    rng = make_rng(key, STREAM_Y)
    sd = np.sqrt(np.diff(times))[None, :, None]
    return rng.standard_normal((n_paths, times.size - 1, d_Y)) * sd


def sample_bundle(model, partition: Partition, M: int, seed, n_paths: int = 1,
                  dY: Optional[np.ndarray] = None) -> PathBundle:
    """Simulate ``n_paths`` fine paths over ``partition`` refined ``M`` times.

    ``seed`` is an int or a tuple of ints; the V, Y and X0 streams are
    derived from it independently.  Pass ``dY`` (shape ``(n_fine, d_Y)`` or
    ``(1, n_fine, d_Y)``) to share one observation path across all signal
    paths.
    """
    times = partition.refine(M)
    key = (seed,) if np.isscalar(seed) else tuple(seed)
    sd = np.sqrt(np.diff(times))[None, :, None]
    dV = make_rng(key, STREAM_V).standard_normal((n_paths, times.size - 1, model.d_V)) * sd
    if dY is None:
        dY = sample_observation(times, model.d_Y, key, n_paths)
    else:
        dY = np.asarray(dY, dtype=float)
        if dY.ndim == 2:
            dY = dY[None]
        if dY.shape[1:] != (times.size - 1, model.d_Y):
            raise DomainError(f"observation increments have shape {dY.shape}")
    x0 = np.asarray(model.x0_sampler(make_rng(key, STREAM_X0), n_paths), dtype=float)
    X = simulate_signal(model, x0, times, dV)
    return PathBundle(times=times, dV=dV, dY=dY, X=X, partition=partition, key=key)


def refine_bundle(model, bundle: PathBundle, seed=None) -> PathBundle:
    """Halve every fine step by Brownian-bridge interpolation of ``V`` and ``Y``.

    The coarse increments are preserved exactly; the signal is re-simulated on
    the finer grid from the same initial states.
    """
    key = bundle.key + (bundle.n_fine,) if seed is None else ((seed,) if np.isscalar(seed) else tuple(seed))
    rng = make_rng(key, STREAM_REFINE)
    dt = bundle.dt

    def split(d):
        z = rng.standard_normal(d.shape) * (0.5 * np.sqrt(dt))[None, :, None]
        out = np.empty((d.shape[0], 2 * d.shape[1], d.shape[2]))
        out[:, 0::2] = 0.5 * d + z
        out[:, 1::2] = 0.5 * d - z
        return out

    mids = 0.5 * (bundle.times[:-1] + bundle.times[1:])
    times = np.empty(2 * bundle.n_fine + 1)
    times[0::2] = bundle.times
    times[1::2] = mids
    dV = split(bundle.dV)
    dY = split(bundle.dY)
    X = simulate_signal(model, bundle.X[:, 0], times, dV)
    return PathBundle(times=times, dV=dV, dY=dY, X=X, partition=bundle.partition, key=key)


@dataclass
class IntervalIncrements:
    """Per-interval integrals against the augmented observation.

    Component 0 integrates against time with the same left-point rule as the
    fine-grid oracle, so ``A^0_j = sum_k (s_k - t_j) ds_k``, which is
    ``δ_j²/2 (1 - 1/M)`` for ``M`` equal sub-steps rather than ``δ_j²/2``.

    Arrays have shape ``(P, n_intervals, d_Y + 1)`` (``B`` has a trailing
    ``d_V`` axis); component 0 integrates against time.  ``P`` is 1 for the
    observation-only terms when the observation is shared.
    """

    deltaY: np.ndarray  # sum dY^i
    A: np.ndarray  # sum (s_k - t_j) dY^i_k
    B: np.ndarray  # sum (V^r_{s_k} - V^r_{t_j}) dY^i_k
    deltas: np.ndarray = field(repr=False, default=None)


def interval_slices(bundle: PathBundle, partition: Partition):
    if partition.t > bundle.times[-1] + _GRID_TOL * max(1.0, bundle.times[-1]):
        raise DomainError("partition extends beyond the bundle's horizon")
    nodes = node_indices(bundle.times, partition)
    return list(zip(nodes[:-1], nodes[1:]))


def _one_interval(bundle: PathBundle, k0: int, k1: int, t_j: float, delta_j: float):
    dYa = bundle.dY_aug(k0, k1)  # (P', m, d_Y + 1)
    s_rel = bundle.times[k0:k1] - t_j
    V = bundle.V
    Vrel = V[:, k0:k1] - V[:, k0:k0 + 1]  # (P, m, d_V)
    dYsum = np.sum(dYa, axis=1)
    A = np.sum(s_rel[None, :, None] * dYa, axis=1)
    if dYa.shape[0] == 1:
        B = np.einsum("mi,pmr->pir", dYa[0], Vrel)
    else:
        B = np.einsum("pmi,pmr->pir", dYa, Vrel)
    dYsum[:, 0] = delta_j
    return dYsum, A, B


def interval_increments(bundle: PathBundle, partition: Partition, intervals=None) -> IntervalIncrements:
    """``ΔY``, ``A`` and ``B`` for every interval of ``partition`` (or a subset)."""
    slices = interval_slices(bundle, partition)
    deltas = partition.deltas
    js = range(len(slices)) if intervals is None else intervals
    parts = [_one_interval(bundle, *slices[j], partition.points[j], deltas[j]) for j in js]
    if not parts:
        P = bundle.n_paths
        d1, dv = bundle.dY.shape[-1] + 1, bundle.dV.shape[-1]
        return IntervalIncrements(np.zeros((1, 0, d1)), np.zeros((1, 0, d1)),
                                  np.zeros((P, 0, d1, dv)), np.zeros(0))
    dY, A, B = (np.stack(x, axis=1) for x in zip(*parts))
    return IntervalIncrements(deltaY=dY, A=A, B=B, deltas=deltas[list(js)])


def _driver(bundle: PathBundle, e: int, k0: int, k1: int) -> np.ndarray:
    if e == 0:
        return np.broadcast_to(bundle.dt[k0:k1][None, :], (bundle.n_paths, k1 - k0))
    if not 1 <= e <= bundle.dV.shape[-1]:
        raise DomainError(f"multi-index entry {e} outside S0 = 0..{bundle.dV.shape[-1]}")
    return bundle.dV[:, k0:k1, e - 1]


def running_iterated(bundle: PathBundle, alpha: MultiIndex, k0: int, k1: int) -> np.ndarray:
    """``I_α(1)_{s_{k0}, s}`` at fine nodes ``s_{k0} .. s_{k1}``, shape ``(P, k1 - k0 + 1)``.

    ``I_α = ∫ I_{α₋} dW^{α_last}`` with ``dW^0 = ds``, evaluated by
    left-point sums from the innermost index outwards.
    """
    P = bundle.n_paths
    cur = np.ones((P, k1 - k0 + 1))
    for e in alpha:
        incr = cur[:, :-1] * _driver(bundle, e, k0, k1)
        nxt = np.zeros_like(cur)
        np.cumsum(incr, axis=1, out=nxt[:, 1:])
        cur = nxt
    return cur


def iterated_integral(bundle: PathBundle, alpha, j: int, partition: Optional[Partition] = None) -> np.ndarray:
    """``I_α(1)_{t_j, t_{j+1}}`` for every path in the bundle."""
    if not isinstance(alpha, MultiIndex):
        alpha = MultiIndex(tuple(alpha))
    if len(alpha) < 1:
        raise DomainError("iterated_integral needs |alpha| >= 1")
    partition = bundle.partition if partition is None else partition
    k0, k1 = interval_slices(bundle, partition)[j]
    return running_iterated(bundle, alpha, k0, k1)[:, -1]


@dataclass(frozen=True)
class MomentCheck:
    passed: bool
    estimate: float
    std_error: float
    bound: float


def exp_moment_bound_check(beta: float, delta: float, N: int = 10**5, M: int = 64,
                           seed=0, chunk: int = 2**14) -> MomentCheck:
    """Monte Carlo check of ``E exp(β ∫_0^δ V_s² ds) <= (1 - 2βδ²)^{-1/2}``.

    Passes when the estimate is at most the bound plus three standard errors.
    """
    if beta < 0 or delta <= 0:
        raise DomainError("need beta >= 0 and delta > 0")
    if 2.0 * beta * delta * delta >= 1.0:
        raise DomainError(
            f"1 - 2*beta*delta^2 = {1 - 2 * beta * delta ** 2:g} <= 0: exponential moment is infinite"
        )
    bound = (1.0 - 2.0 * beta * delta * delta) ** -0.5
    if beta == 0:
        return MomentCheck(True, 1.0, 0.0, bound)
    rng = make_rng(seed, STREAM_V)
    dt = delta / M
    vals = []
    for start in range(0, N, chunk):
        n = min(chunk, N - start)
        V = np.cumsum(rng.standard_normal((n, M)) * np.sqrt(dt), axis=1)
        left = np.concatenate([np.zeros((n, 1)), V[:, :-1]], axis=1)
        vals.append(np.exp(beta * np.sum(left * left, axis=1) * dt))
    vals = np.concatenate(vals)
    est = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(N))
    return MomentCheck(est <= bound + 3.0 * se, est, se, bound)
