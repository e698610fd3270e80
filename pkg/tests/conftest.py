import numpy as np
import pytest

from ksfilter.model import SignalModel, ScalarFunction


def scalar_model(f, sigma, h=None, f_jac=None, sigma_jac=None, x0=0.0, **kw):
    """One-dimensional model from scalar callables (for operator examples)."""
    h = h or (lambda x: np.sin(x))
    return SignalModel(
        d_X=1, d_V=1, d_Y=1,
        f=lambda x: f(x),
        sigma=lambda x: sigma(x)[..., None, None],
        h=h,
        x0_sampler=lambda rng, n: np.full((n, 1), x0),
        f_jac=f_jac, sigma_jac=sigma_jac, **kw,
    )


SIN = ScalarFunction(lambda x: np.sin(x[..., 0]), np.cos, lambda x: -np.sin(x)[..., None], "sin")
IDENT = ScalarFunction(lambda x: x[..., 0], lambda x: np.ones_like(x),
                       lambda x: np.zeros(x.shape + (1,)), "x")
SQUARE = ScalarFunction(lambda x: x[..., 0] ** 2, lambda x: 2 * x,
                        lambda x: np.full(x.shape + (1,), 2.0), "x2")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
