"""Solving ``K'(t; theta) = x`` by damped Newton iteration."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import dual as ad
from .cgf.ops import check_theta
from .errors import DimensionMismatch, DomainError, DomainExit, NotConverged, SingularHessian

MAX_HALVINGS = 50
POLISH_STEPS = 3
RECONSTRUCTION_TOL = 1e-8
STEP_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class SaddlepointSolution:
    """Saddlepoint ``t_hat`` with ``K''(t_hat)`` and the LDL factors of its inverse.

    ``inv(K2) == ldl_A @ diag(ldl_d) @ ldl_A.T`` with ``ldl_A`` unit lower
    triangular.
    """

    t_hat: np.ndarray
    K2: np.ndarray
    ldl_A: np.ndarray
    ldl_d: np.ndarray
    residual_norm: float
    iterations: int

    @property
    def Q(self):
        return (self.ldl_A * self.ldl_d) @ self.ldl_A.T

    @property
    def logdet_K2(self):
        return float(-np.sum(np.log(self.ldl_d)))


def _inf(v):
    return float(np.max(np.abs(v))) if np.size(v) else 0.0


def _residual(node, t, theta, x):
    r = np.asarray(node.K1(t, theta), dtype=float) - x
    return r, _inf(r)


def _newton_direction(node, t, theta, r):
    k2 = np.asarray(node.K2(t, theta), dtype=float)
    if not np.all(np.isfinite(k2)):
        raise SingularHessian("K'' has non-finite entries")
    try:
        c = np.linalg.cholesky(k2)
    except np.linalg.LinAlgError as exc:
        raise SingularHessian(f"K'' is not positive definite at t = {t}") from exc
    y = np.linalg.solve(c, -r)
    return np.linalg.solve(c.T, y)


def _check_observation(node, x):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != node.dim:
        raise DimensionMismatch(f"x has length {x.shape[0]}, node dimension is {node.dim}")
    if not np.all(np.isfinite(x)):
        raise DomainError("observation has non-finite entries")
    return x


def factor(node, theta, t, residual_norm=0.0, iterations=0) -> SaddlepointSolution:
    """Package ``t`` with K'' and the LDL factors of its inverse."""
    k2 = np.asarray(node.K2(t, theta), dtype=float)
    if not np.all(np.isfinite(k2)):
        raise SingularHessian("K'' has non-finite entries")
    a, d = ad.ldl_of_inverse_values(k2)
    recon = ((a * d) @ a.T) @ k2 - np.eye(k2.shape[0])
    if not np.all(d > 0) or _inf(recon) > RECONSTRUCTION_TOL:
        raise SingularHessian(f"K'' is too ill-conditioned to invert (reconstruction error {_inf(recon):.3g})")
    return SaddlepointSolution(np.array(t), k2, a, d, float(residual_norm), int(iterations))


def solve_saddlepoint(node, theta, x, tol=1e-10, max_iter=100, t0=None) -> SaddlepointSolution:
    """Newton's method from ``t = 0`` with step halving.

    A step is halved (up to 50 times) until it stays in the CGF domain and
    reduces the sup-norm residual.  Convergence needs both
    ``|K'(t) - x|_inf <= tol * (1 + |x|_inf)`` and a small Newton step; a tiny
    residual with steps that never shrink means ``t`` is running off to
    infinity (x on the edge of the mean range) and raises DomainExit.  A few
    undamped steps then polish the root while they reduce the residual.
    """
    theta = np.asarray(check_theta(node, theta), dtype=float)
    x = _check_observation(node, x)
    if node.singular:
        raise SingularHessian(f"{node.kind} node has a singular covariance; wrap it in a linear map")
    t = np.zeros(node.dim) if t0 is None else np.array(t0, dtype=float).reshape(-1)
    if t.shape[0] != node.dim:
        raise DimensionMismatch("t0 has the wrong length")
    if not node.in_domain(t, theta):
        raise DomainError("starting point lies outside the CGF domain")
    target = tol * (1.0 + _inf(x))
    r, rn = _residual(node, t, theta, x)
    it = 0
    while True:
        step = _newton_direction(node, t, theta, r)
        if rn <= target and _inf(step) <= STEP_TOL * (1.0 + _inf(t)):
            break
        if it >= max_iter:
            if rn <= target:
                raise DomainExit(f"saddlepoint diverges (|t| = {_inf(t):.3g}); x is on the edge of the mean range")
            raise NotConverged(f"saddlepoint residual {rn:.3g} after {max_iter} iterations")
        lam, admissible = 1.0, False
        for _ in range(MAX_HALVINGS + 1):
            cand = t + lam * step
            if node.in_domain(cand, theta):
                rc, rcn = _residual(node, cand, theta, x)
                admissible = True
                if np.isfinite(rcn) and rcn < rn:
                    break
            lam *= 0.5
        else:
            if not admissible:
                raise DomainExit(f"no damped Newton step stays in the CGF domain (residual {rn:.3g})")
            if rn <= target:
                # rounding floor: the residual cannot be reduced any further
                break
            raise NotConverged(f"saddlepoint residual stalled at {rn:.3g}")
        t, r, rn = cand, rc, rcn
        it += 1
    for _ in range(POLISH_STEPS):
        if rn == 0.0:
            break
        try:
            cand = t + _newton_direction(node, t, theta, r)
        except SingularHessian:
            break
        if not node.in_domain(cand, theta):
            break
        rc, rcn = _residual(node, cand, theta, x)
        if not rcn < rn:
            break
        t, r, rn = cand, rc, rcn
    return factor(node, theta, t, rn, it)


def tilt_dual(node, theta, x, sol: SaddlepointSolution):
    """``t_hat(theta)`` carrying the derivatives of a dual ``theta``.

    Newton steps in dual arithmetic from the converged float root.  Each step
    doubles the number of correct derivative orders, so ``ceil(log2(k + 1))``
    steps give exact derivatives up to order ``k``.
    """
    k = ad.depth(theta)
    if k == 0:
        return sol.t_hat
    t = sol.t_hat
    for _ in range(max(1, math.ceil(math.log2(k + 1)))):
        r = node.K1(t, theta) - x
        t = t - ad.solve(node.K2(t, theta), r)
    return t
