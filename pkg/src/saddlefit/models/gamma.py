"""Gamma models: the fixed-rate scalar model and the multivariate block model."""

from __future__ import annotations

import numpy as np
from scipy.special import digamma, gammaln

from ..cgf import Concat, Fixed, Gamma, IidSum, ModelSpec, Select, Stack
from ..errors import ConfigError, DomainError

_SERIES_FROM = 20.0


def log_minus_digamma(z):
    """``log(z) - digamma(z)`` without cancellation for large ``z``."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    big = z >= _SERIES_FROM
    zb = z[big]
    r = 1.0 / (zb * zb)
    out[big] = 0.5 / zb + r * (1.0 / 12 - r * (1.0 / 120 - r * (1.0 / 252 - r * (1.0 / 240 - r / 132))))
    zs = z[~big]
    out[~big] = np.log(zs) - digamma(zs)
    return out


# -- fixed-rate scalar model -------------------------------------------------
def build_gamma_fixed_rate(n=1.0):
    """Sum of ``n`` i.i.d. Gamma(alpha, 1) variables; theta = (alpha,)."""
    n = float(n)
    if not n >= 1:
        raise ConfigError(f"n must be at least 1, got {n}")
    return IidSum(n, Gamma(Stack((Select((0,)), Fixed([1.0])))))


def gamma_fixed_rate_spec(n=1.0, alpha0=1.0):
    return ModelSpec(build_gamma_fixed_rate(n), ("alpha",), ("positive",), [alpha0])


def _check_gamma_args(alpha, x, n):
    alpha = float(np.asarray(alpha).reshape(-1)[0])
    x = float(np.asarray(x).reshape(-1)[0])
    if not x > 0:
        raise DomainError(f"gamma observation must be positive, got {x}")
    if not alpha > 0 or not n > 0:
        raise DomainError("gamma shape and n must be positive")
    return alpha, x


def true_loglik_gamma(alpha, x, n=1.0):
    """Exact log-density of Gamma(n alpha, 1) at x."""
    alpha, x = _check_gamma_args(alpha, x, n)
    s = n * alpha
    return float((s - 1.0) * np.log(x) - x - gammaln(s))


def true_loglik_gamma_grad(alpha, x, n=1.0):
    """``d/d alpha`` of :func:`true_loglik_gamma`, written as ``n [log(x / s) + log s - digamma s]``."""
    alpha, x = _check_gamma_args(alpha, x, n)
    s = n * alpha
    return np.array([n * (np.log(x / s) + log_minus_digamma(s))])


def gamma_discrepancy_closed_form(alpha_spa, n=1.0):
    """Approximated discrepancy ``1 / (6 n (2 n alpha + 1))`` for the fixed-rate model."""
    return 1.0 / (6.0 * n * (2.0 * n * alpha_spa + 1.0))


def gamma_correction_closed_form(alpha, n=1.0):
    return -1.0 / (12.0 * n * alpha)


def stirling_remainder(alpha):
    """``log Gamma(a) - [(a - 1/2) log a - a + (1/2) log 2 pi]``."""
    return gammaln(alpha) - ((alpha - 0.5) * np.log(alpha) - alpha + 0.5 * np.log(2 * np.pi))


# -- multivariate gamma blocks -----------------------------------------------
def build_mvgamma(k, m, n=None):
    """k x m independent gammas with shape ``omega_i tau`` and rate ``tau``.

    theta = (omega_1, ..., omega_k, tau); entry ``(i, j)`` sits at position
    ``i * m + j``.  With ``n`` given the result is the sum of n i.i.d. copies.
    """
    k, m = int(k), int(m)
    if k < 1 or m < 1:
        raise ConfigError("k and m must be at least 1")
    blocks = tuple(Gamma(Select((i, k)), "mean_rate") for i in range(k) for _ in range(m))
    node = Concat(blocks)
    return node if n is None else IidSum(float(n), node)


def mvgamma_spec(k, m, n=None, theta0=None):
    names = tuple(f"omega{i + 1}" for i in range(k)) + ("tau",)
    return ModelSpec(build_mvgamma(k, m, n), names, ("positive",) * (k + 1), theta0)


def _mvgamma_args(theta, x, k, m, n):
    theta = np.asarray(theta, dtype=float).reshape(-1)
    x = np.asarray(x, dtype=float).reshape(-1)
    if theta.shape[0] != k + 1 or x.shape[0] != k * m:
        raise DomainError("theta or x has the wrong length for this block model")
    if np.any(x <= 0):
        raise DomainError("gamma observations must be positive")
    if np.any(theta <= 0) or not n > 0:
        raise DomainError("omega, tau and n must be positive")
    omega, tau = theta[:k], theta[k]
    shape = np.repeat(n * omega * tau, m)
    return omega, tau, shape, x


def true_loglik_mvgamma(theta, x, k, m, n=1.0):
    """Sum of Gamma(n omega_i tau, tau) log-densities."""
    omega, tau, shape, x = _mvgamma_args(theta, x, k, m, n)
    return float(np.sum(shape * np.log(tau) - gammaln(shape) + (shape - 1.0) * np.log(x) - tau * x))


def true_loglik_mvgamma_grad(theta, x, k, m, n=1.0):
    omega, tau, shape, x = _mvgamma_args(theta, x, k, m, n)
    # log(tau x) - digamma(shape) regrouped to avoid cancellation
    core = np.log(tau * x / shape) + log_minus_digamma(shape)
    om = np.repeat(omega, m)
    g_omega = (n * tau * core).reshape(k, m).sum(axis=1)
    g_tau = np.sum(n * om * core + n * om - x)
    return np.concatenate([g_omega, [g_tau]])
