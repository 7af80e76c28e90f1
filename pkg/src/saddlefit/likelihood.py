"""First- and second-order saddlepoint log-likelihoods and the correction term."""

from __future__ import annotations

import itertools
import math

import numpy as np

from . import dual as ad
from .errors import DimensionTooLarge, NonFiniteHessian
from .saddlepoint import SaddlepointSolution, solve_saddlepoint, tilt_dual

LOG_2PI = math.log(2.0 * math.pi)
DIRECT_MAX_DIM = 8


def _solve(node, theta, x, sol):
    return solve_saddlepoint(node, theta, x) if sol is None else sol


# -- log-likelihood ----------------------------------------------------------
def spa_loglik(node, theta, x, sol: SaddlepointSolution | None = None) -> float:
    """``K(t_hat) - t_hat x - (d/2) log 2 pi - (1/2) log det K''(t_hat)``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    theta = np.asarray(theta, dtype=float)
    sol = _solve(node, theta, x, sol)
    t = sol.t_hat
    return float(node.K(t, theta) - t @ x - 0.5 * node.dim * LOG_2PI - 0.5 * sol.logdet_K2)


def loglik_generic(node, t, theta, x):
    """The same expression for arbitrary (possibly dual) ``t`` and ``theta``."""
    return node.K(t, theta) - t @ x - 0.5 * node.dim * LOG_2PI - 0.5 * ad.logdet(node.K2(t, theta))


def _partials_at_fixed_t(node, t, theta):
    """Partial theta-derivatives of K, K' and K'' with t held fixed."""
    th = ad.seed(theta)
    p = th.n_seeds
    d = node.dim
    k = node.K(t, th)
    k1 = node.K1(t, th)
    k2 = node.K2(t, th)
    dk = np.asarray(ad.derivative(k, th.tag, p, ()))
    dk1 = np.asarray(ad.derivative(k1, th.tag, p, (d,)))
    dk2 = np.asarray(ad.derivative(k2, th.tag, p, (d, d)))
    return dk, dk1, dk2


def tilt_derivative(sol: SaddlepointSolution, dk1):
    """Implicit derivative of t_hat: row ``a`` is ``-Q dK'/dtheta_a``."""
    return -(dk1 @ sol.Q)


def spa_loglik_grad(node, theta, x, sol=None, method="closed"):
    """Total theta-gradient of :func:`spa_loglik`.

    ``method="closed"`` assembles it from partial derivatives at fixed
    ``t_hat``, the implicit derivative of ``t_hat`` and K3 contractions with
    the LDL columns.  ``method="dual"`` differentiates the whole expression
    through a dual-valued ``t_hat``.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    theta = np.asarray(theta, dtype=float)
    sol = _solve(node, theta, x, sol)
    if method == "dual":
        th = ad.seed(theta)
        t = tilt_dual(node, th, x, sol)
        out = loglik_generic(node, t, th, x)
        return np.asarray(ad.derivative(out, th.tag, th.n_seeds, ()))
    if method != "closed":
        raise ValueError(f"unknown gradient method {method!r}")
    t = sol.t_hat
    dk, dk1, dk2 = _partials_at_fixed_t(node, t, theta)
    dt = tilt_derivative(sol, dk1)
    q = sol.Q
    trace_partial = np.einsum("ij,aji->a", q, dk2)
    cols = sol.ldl_A[:, :, None]
    k3 = node.K3(t, theta, cols, cols, dt.T[:, None, :])
    trace_tilt = np.asarray(sol.ldl_d @ np.asarray(k3, dtype=float)).reshape(-1)
    return dk - 0.5 * (trace_partial + trace_tilt)


def _fd_steps(theta):
    return np.cbrt(np.finfo(float).eps) * (1.0 + np.abs(theta))


def spa_loglik_hess(node, theta, x, method="fd", grad_method="closed"):
    """Hessian of :func:`spa_loglik` in theta, symmetrized.

    ``method="fd"`` differences the analytic gradient centrally with step
    ``cbrt(eps) (1 + |theta_i|)``; ``method="dual"`` nests two dual levels.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    theta = np.asarray(theta, dtype=float)
    p = theta.shape[0]
    if method == "fd":
        h = _fd_steps(theta)
        hess = np.empty((p, p))
        for i in range(p):
            e = np.zeros(p)
            e[i] = h[i]
            gp = spa_loglik_grad(node, theta + e, x, method=grad_method)
            gm = spa_loglik_grad(node, theta - e, x, method=grad_method)
            hess[:, i] = (gp - gm) / (2.0 * h[i])
    elif method == "dual":
        sol = solve_saddlepoint(node, theta, x)
        inner = ad.seed(theta)
        outer = ad.seed(inner)
        t = tilt_dual(node, outer, x, sol)
        out = loglik_generic(node, t, outer, x)
        hess = np.asarray(ad.value(out.der.der), dtype=float).reshape(p, p)
    else:
        raise ValueError(f"unknown Hessian method {method!r}")
    hess = 0.5 * (hess + hess.T)
    if not np.all(np.isfinite(hess)):
        raise NonFiniteHessian("log-likelihood Hessian has non-finite entries")
    return hess


# -- correction term ---------------------------------------------------------
def _pair_index(n):
    i, j = np.triu_indices(n)
    mult = np.where(i == j, 1.0, 2.0)
    return i, j, mult


def _triple_index(n):
    combos = np.array(list(itertools.combinations_with_replacement(range(n), 3)), dtype=int).reshape(-1, 3)
    i, j, k = combos.T
    distinct = 1 + (i != j).astype(int) + (j != k).astype(int)
    mult = np.choose(distinct - 1, [1.0, 3.0, 6.0])
    return i, j, k, mult


def correction_from_factors(node, t, theta, a, d):
    """The correction term in LDL form; generic over dual inputs.

    With ``Q = sum_l d_l A_l A_l^T``::

        T = 1/8  sum_{l,m} d_l d_m K4(A_l, A_l, A_m, A_m)
          - 1/8  sum_m d_m s_m^2,   s_m = sum_l d_l K3(A_l, A_l, A_m)
          - 1/12 sum_{l,m,n} d_l d_m d_n K3(A_l, A_m, A_n)^2

    The symmetric sums run over ascending index tuples with multiplicities.
    """
    n = ad._shape(d)[0]
    i, j, mult2 = _pair_index(n)
    k4 = node.K4(t, theta, a[:, i], a[:, i], a[:, j], a[:, j])
    term1 = (mult2 * d[i] * d[j] * k4).sum()

    cols = a[:, :, None]
    rows = a[:, None, :]
    s = d @ node.K3(t, theta, cols, cols, rows)
    term2 = (d * s * s).sum()

    i, j, k, mult3 = _triple_index(n)
    k3 = node.K3(t, theta, a[:, i], a[:, j], a[:, k])
    term3 = (mult3 * d[i] * d[j] * d[k] * k3 * k3).sum()
    return term1 / 8.0 - term2 / 8.0 - term3 / 12.0


def correction_T(node, sol: SaddlepointSolution, theta) -> float:
    theta = np.asarray(theta, dtype=float)
    return float(correction_from_factors(node, sol.t_hat, theta, sol.ldl_A, sol.ldl_d))


def derivative_tensors(node, t, theta):
    """Dense third and fourth t-derivative arrays, built from basis contractions."""
    d = node.dim
    eye = np.eye(d)
    e1 = eye.reshape(d, d, 1, 1, 1)
    e2 = eye.reshape(d, 1, d, 1, 1)
    e3 = eye.reshape(d, 1, 1, d, 1)
    e4 = eye.reshape(d, 1, 1, 1, d)
    k4 = node.K4(t, theta, e1, e2, e3, e4)
    k3 = node.K3(t, theta, e1[..., 0], e2[..., 0], e3[..., 0])
    return k3, k4


def correction_T_direct(node, sol: SaddlepointSolution, theta) -> float:
    """The correction term by explicit nested sums over all index tuples.

    A reference implementation whose cost grows like d**6.
    """
    d = node.dim
    if d > DIRECT_MAX_DIM:
        raise DimensionTooLarge(f"direct correction term is limited to d <= {DIRECT_MAX_DIM}, got {d}")
    theta = np.asarray(theta, dtype=float)
    k3, k4 = (np.asarray(a, dtype=float) for a in derivative_tensors(node, sol.t_hat, theta))
    q = np.linalg.inv(sol.K2)
    idx = range(d)
    first = 0.0
    for j1, j2, j3, j4 in itertools.product(idx, repeat=4):
        first += k4[j1, j2, j3, j4] * q[j1, j2] * q[j3, j4]
    second = 0.0
    third = 0.0
    for j1, j2, j3, j4, j5, j6 in itertools.product(idx, repeat=6):
        kk = k3[j1, j2, j3] * k3[j4, j5, j6]
        second += kk * q[j1, j2] * q[j3, j4] * q[j5, j6]
        third += kk * q[j1, j4] * q[j2, j5] * q[j3, j6]
    return first / 8.0 - second / 8.0 - third / 12.0


def spa_loglik2(node, theta, x, sol=None) -> float:
    """Second-order saddlepoint log-likelihood."""
    x = np.asarray(x, dtype=float).reshape(-1)
    sol = _solve(node, theta, x, sol)
    return spa_loglik(node, theta, x, sol) + correction_T(node, sol, theta)
