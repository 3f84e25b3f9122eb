"""Builtin drift and test-function catalog.

Every drift comes with its contract constants: kappa1 bounds the
one-sided Lipschitz part, kappa2 the law sensitivity through the
theta-distance, Theta the growth at the origin.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .mkv import MkvDrift


def zero_drift(theta: float = 1.0) -> MkvDrift:
    return MkvDrift(b=lambda t, x, mu: np.zeros_like(x),
                    kappa1=0.0, kappa2=0.0, Theta=0.0, theta=theta, name="zero")


def constant_drift(v, theta: float = 1.0) -> MkvDrift:
    v = np.atleast_1d(np.asarray(v, dtype=float))
    mag = float(np.linalg.norm(v))
    return MkvDrift(b=lambda t, x, mu: np.broadcast_to(v, x.shape),
                    kappa1=0.0, kappa2=0.0, Theta=mag, theta=theta, name="constant")


def ou_drift(rate: float = 1.0, theta: float = 1.0) -> MkvDrift:
    """b = -rate * x; kappa1 = -2 rate, no law dependence."""
    if rate <= 0:
        raise ConfigError("ou rate must be positive")
    return MkvDrift(b=lambda t, x, mu: -rate * x,
                    kappa1=-2.0 * rate, kappa2=0.0, Theta=0.0, theta=theta, name="ou")


def meanfield_ou(beta: float = 1.0, gamma: float = 0.5, theta: float = 1.0) -> MkvDrift:
    """b = -beta x + gamma mean(mu); kappa1 = -2 beta, kappa2 = 2 gamma.

    The mean is 1-Lipschitz in the theta-distance, so the law term obeys
    the kappa2 bound; the growth constant is gamma because
    |mean(mu)| <= mu(|.|^theta)^(1/theta).
    """
    if beta <= 0 or gamma < 0:
        raise ConfigError("need beta > 0 and gamma >= 0")
    return MkvDrift(b=lambda t, x, mu: -beta * x + gamma * mu.mean_vec,
                    kappa1=-2.0 * beta, kappa2=2.0 * gamma, Theta=gamma,
                    theta=theta, name="meanfield_ou")


def double_well(gamma: float = 0.5, theta: float = 1.0) -> MkvDrift:
    """b = x - x^3 - gamma (x - mean(mu)), coordinatewise cubic.

    The cubic part is dissipative, so kappa1 = 2(1 - gamma) and the
    law enters only through the mean: kappa2 = 2 gamma.
    """
    if gamma < 0:
        raise ConfigError("gamma must be nonnegative")

    def b(t, x, mu):
        return x - x ** 3 - gamma * (x - mu.mean_vec)

    return MkvDrift(b=b, kappa1=2.0 * (1.0 - gamma), kappa2=2.0 * gamma,
                    Theta=gamma, theta=theta, name="double_well")


DRIFTS = {
    "zero": zero_drift,
    "constant": constant_drift,
    "ou": ou_drift,
    "meanfield_ou": meanfield_ou,
    "double_well": double_well,
}


def drift_by_name(name: str, params: dict | None = None, theta: float = 1.0) -> MkvDrift:
    if name not in DRIFTS:
        raise ConfigError(f"unknown drift {name!r}; known: {sorted(DRIFTS)}")
    params = dict(params or {})
    return DRIFTS[name](**params, theta=theta)


# --- bounded test functions -------------------------------------------------

def _r2(x):
    """Squared norm along the coordinate axis: (..., d) -> (...)."""
    return np.sum(np.asarray(x, dtype=float) ** 2, axis=-1)


def f_gauss_plus_one(x):
    """1 + exp(-|x|^2); bounded in [1, 2]."""
    return 1.0 + np.exp(-_r2(x))


def f_cauchy_plus_one(x):
    """1 + 1/(1 + |x|^2)."""
    return 1.0 + 1.0 / (1.0 + _r2(x))


def f_bump_plus_one(x):
    """1 + smooth compactly supported bump on |x| < 3."""
    s = _r2(x) / 9.0
    with np.errstate(divide="ignore", over="ignore"):
        val = np.where(s < 1.0, np.exp(1.0 - 1.0 / np.maximum(1.0 - s, 1e-300)), 0.0)
    return 1.0 + val


def f_gauss(x):
    """exp(-|x|^2); bounded nonnegative, for the power inequality."""
    return f_gauss_plus_one(x) - 1.0


TEST_FUNCTIONS = {
    "gauss_plus_one": f_gauss_plus_one,
    "cauchy_plus_one": f_cauchy_plus_one,
    "bump_plus_one": f_bump_plus_one,
    "gauss": f_gauss,
}


def test_function_by_name(name: str):
    if name not in TEST_FUNCTIONS:
        raise ConfigError(f"unknown test function {name!r}; known: {sorted(TEST_FUNCTIONS)}")
    return TEST_FUNCTIONS[name]
