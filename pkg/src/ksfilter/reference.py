"""Independent references: the scalar Kalman-Bucy filter and prior moments."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericError, UnsupportedModelError
from .model import LinearParams, ScalarFunction, SignalModel
from .paths import make_rng, simulate_signal, STREAM_V, STREAM_X0

VARIANCE_FLOOR = 1e-12
RICCATI_TOL = 1e-8


@dataclass
class KalmanState:
    times: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    riccati_residual: float


def _linear_params(model_or_params) -> LinearParams:
    if isinstance(model_or_params, LinearParams):
        return model_or_params
    lin = getattr(model_or_params, "linear", None)
    if lin is None:
        raise UnsupportedModelError("Kalman-Bucy reference needs a LINEAR model")
    return lin


def riccati_rhs(P, a, sigma, c):
    return 2.0 * a * P + sigma * sigma - c * c * P * P


def kalman_bucy(model_or_params, dY, times) -> KalmanState:
    """Euler-discretised Kalman-Bucy filter on the fine grid of ``dY``.

    ``dP = (2aP + σ² - c²P²) ds`` and ``dm = a m ds + c P (dY - c m ds)``.
    """
    lin = _linear_params(model_or_params)
    times = np.asarray(times, dtype=float)
    dY = np.asarray(dY, dtype=float).reshape(-1)
    dt = np.diff(times)
    if dY.size != dt.size:
        raise DomainError(f"{dY.size} observation increments for {dt.size} fine steps")
    a, s, c = lin.a, lin.sigma, lin.c
    P0 = lin.P0
    if P0 < VARIANCE_FLOOR:
        warnings.warn(f"initial variance {P0:g} floored at {VARIANCE_FLOOR:g}")
        P0 = VARIANCE_FLOOR
    m = np.empty(times.size)
    P = np.empty(times.size)
    m[0], P[0] = lin.m0, P0
    for k in range(dt.size):
        m[k + 1] = m[k] + a * m[k] * dt[k] + c * P[k] * (dY[k] - c * m[k] * dt[k])
        P[k + 1] = P[k] + riccati_rhs(P[k], a, s, c) * dt[k]
        if P[k + 1] <= 0:
            P[k + 1] = VARIANCE_FLOOR
    if not np.all(np.isfinite(m)):
        raise NumericError("non-finite Kalman mean")
    resid = np.abs(np.diff(P) / dt - riccati_rhs(P[:-1], a, s, c))
    # floored steps are the only ones allowed to miss the recursion
    resid = resid[P[1:] > VARIANCE_FLOOR]
    residual = float(resid.max()) if resid.size else 0.0
    if residual > RICCATI_TOL * max(1.0, float(np.max(np.abs(riccati_rhs(P, a, s, c))))):
        raise NumericError(f"Riccati recursion residual {residual:g}")
    return KalmanState(times, m, P, residual)


def lyapunov_variance(s, a, sigma, P0):
    """Exact prior variance of the OU signal at time ``s``."""
    if a == 0:
        return P0 + sigma * sigma * s
    stat = sigma * sigma / (-2.0 * a)
    return stat + (P0 - stat) * np.exp(2.0 * a * s)


def prior_moment(model: SignalModel, phi: ScalarFunction, t: float, n: int = 10**5, seed=0,
                 n_steps: int = 200):
    """Plain Monte Carlo ``E[phi(X_t)]`` under the signal law; returns ``(mean, std_error)``."""
    if n < 2:
        raise DomainError("need n >= 2")
    times = np.linspace(0.0, t, n_steps + 1)
    dV = make_rng(seed, STREAM_V).standard_normal((n, n_steps, model.d_V)) * np.sqrt(t / n_steps)
    x0 = model.x0_sampler(make_rng(seed, STREAM_X0), n)
    X = simulate_signal(model, x0, times, dV)
    vals = np.asarray(phi(X[:, -1]), dtype=float)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n))
