"""Gradient of the correction term and the approximated MLE discrepancy."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import dual as ad
from .cgf.ops import differentiate_wrt_params
from .errors import DimensionMismatch, DimensionTooLarge, IndefiniteHessian, NotAStationaryPoint
from .likelihood import (_partials_at_fixed_t, correction_from_factors, derivative_tensors,
                         spa_loglik, spa_loglik_grad, spa_loglik_hess, tilt_derivative)
from .saddlepoint import solve_saddlepoint, tilt_dual

EXPANSION_MAX_DIM = 5
MAX_CONDITION = 1e12
STATIONARY_TOL = 1e-6


def _grad_T_dual(node, theta, x, sol):
    th = ad.seed(theta)
    t = tilt_dual(node, th, x, sol)
    a, d = ad.ldl_of_inverse(node.K2(t, th))
    out = correction_from_factors(node, t, th, a, d)
    return np.asarray(ad.derivative(out, th.tag, th.n_seeds, ()), dtype=float)


def _grad_T_expansion(node, theta, x, sol):
    """Four-term expansion of the gradient on dense derivative arrays.

    Each total derivative ``grad K^(r) = d_theta K^(r) + K^(r+1) . dt`` comes
    from seeding t with the implicit derivative of t_hat, which also supplies
    the fifth-order piece of ``grad K4`` without forming a fifth-order array.
    """
    if node.dim > EXPANSION_MAX_DIM:
        raise DimensionTooLarge(f"the expansion cross-check is limited to d <= {EXPANSION_MAX_DIM}")
    t = sol.t_hat
    _, dk1, _ = _partials_at_fixed_t(node, t, theta)
    dt = tilt_derivative(sol, dk1)

    def total(f):
        return np.asarray(differentiate_wrt_params(f, node, t, theta, t_seed=dt), dtype=float)

    g2 = total(lambda n, tt, th: n.K2(tt, th))
    g3 = total(lambda n, tt, th: derivative_tensors(n, tt, th)[0])
    g4 = total(lambda n, tt, th: derivative_tensors(n, tt, th)[1])
    k3, k4 = (np.asarray(a, dtype=float) for a in derivative_tensors(node, t, theta))
    q = np.linalg.inv(sol.K2)

    def e(spec, *ops):
        return np.einsum(spec, *ops, optimize=True)

    # index letters: a..h stand for j1..j8, p for the parameter
    term1 = e("ab,cd,pabcd->p", q, q, g4) / 8.0
    w3 = 3.0 * e("ab,cd,ef,def->abc", q, q, q, k3) + 2.0 * e("ad,be,cf,def->abc", q, q, q, k3)
    term2 = -e("abc,pabc->p", w3, g3) / 12.0
    term3 = -e("ae,bf,cd,abcd,pef->p", q, q, q, k4, g2) / 4.0
    term4 = (2.0 * e("ab,cd,eg,hf,abc,def,pgh->p", q, q, q, q, k3, k3, g2)
             + e("ab,ef,cg,hd,abc,def,pgh->p", q, q, q, q, k3, k3, g2)
             + 2.0 * e("fc,ad,eg,hb,abc,def,pgh->p", q, q, q, q, k3, k3, g2)) / 8.0
    return term1 + term2 + term3 + term4


def grad_T(node, theta, x, sol=None, method="dual"):
    """Total theta-gradient of the correction term at fixed ``x``.

    ``method="dual"`` differentiates the LDL form through a dual t_hat and
    dual LDL factors.  ``method="expansion"`` evaluates the four-term
    expansion on dense arrays (d <= 5) and serves as a cross-check.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    theta = np.asarray(theta, dtype=float)
    if sol is None:
        sol = solve_saddlepoint(node, theta, x)
    if method == "dual":
        return _grad_T_dual(node, theta, x, sol)
    if method == "expansion":
        return _grad_T_expansion(node, theta, x, sol)
    raise ValueError(f"unknown grad_T method {method!r}")


@dataclass(frozen=True, eq=False)
class DiscrepancyReport:
    delta_hat: np.ndarray
    grad_T: np.ndarray
    hessian_used: np.ndarray
    standard_errors: np.ndarray
    ratio: np.ndarray

    def to_dict(self):
        return {
            "delta_hat": self.delta_hat.tolist(),
            "se": self.standard_errors.tolist(),
            "ratio": self.ratio.tolist(),
        }

    def to_json(self):
        return json.dumps(self.to_dict())


def newton_solve(hessian, g):
    """``-H^{-1} g`` for a negative definite ``H``, with a conditioning check."""
    h = np.asarray(hessian, dtype=float)
    if not np.all(np.isfinite(h)):
        raise IndefiniteHessian("Hessian has non-finite entries")
    eig = np.linalg.eigvalsh(h)
    if not np.all(eig < 0):
        raise IndefiniteHessian(f"Hessian is not negative definite; eigenvalues {eig}")
    cond = eig.min() / eig.max()
    if cond > MAX_CONDITION:
        raise IndefiniteHessian(f"Hessian condition number {cond:.3g} exceeds {MAX_CONDITION:.0e}")
    return -sla.solve(h, np.asarray(g, dtype=float), assume_a="sym")


def standard_errors(hessian):
    """Wald standard errors ``sqrt(diag((-H)^{-1}))``; NaN where undefined."""
    h = np.asarray(hessian, dtype=float)
    if not np.all(np.isfinite(h)):
        return np.full(h.shape[0], np.nan)
    try:
        c = np.linalg.cholesky(-h)
    except np.linalg.LinAlgError:
        return np.full(h.shape[0], np.nan)
    ci = sla.solve_triangular(c, np.eye(h.shape[0]), lower=True)
    return np.sqrt(np.sum(ci * ci, axis=0))


def discrepancy_report(node, theta_spa, x, hess_method="fd", grad_T_method="dual",
                       stationary_tol=STATIONARY_TOL) -> DiscrepancyReport:
    """Approximated discrepancy ``-H^{-1} grad_T^T`` at a saddlepoint MLE.

    ``theta_spa`` must be a stationary point of the saddlepoint log-likelihood
    (gradient norm at most ``stationary_tol * (1 + |loglik|)``).
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    theta = np.asarray(theta_spa, dtype=float)
    sol = solve_saddlepoint(node, theta, x)
    ll = spa_loglik(node, theta, x, sol)
    g = spa_loglik_grad(node, theta, x, sol)
    gn = float(np.linalg.norm(g))
    if gn > stationary_tol * (1.0 + abs(ll)):
        raise NotAStationaryPoint(f"gradient norm {gn:.3g} at the supplied saddlepoint MLE")
    hess = spa_loglik_hess(node, theta, x, method=hess_method)
    gt = grad_T(node, theta, x, sol, method=grad_T_method)
    delta = newton_solve(hess, gt)
    se = standard_errors(hess)
    return DiscrepancyReport(delta, gt, hess, se, delta / se)


def approx_discrepancy(node, theta_spa, x, **kwargs) -> np.ndarray:
    return discrepancy_report(node, theta_spa, x, **kwargs).delta_hat


def true_discrepancy(theta_true, theta_spa) -> np.ndarray:
    a = np.asarray(theta_true, dtype=float).reshape(-1)
    b = np.asarray(theta_spa, dtype=float).reshape(-1)
    if a.shape != b.shape:
        raise DimensionMismatch(f"parameter vectors differ in length: {a.shape[0]} vs {b.shape[0]}")
    return a - b
