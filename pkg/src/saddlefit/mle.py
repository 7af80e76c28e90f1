"""Maximum-likelihood fitting with BFGS in transformed coordinates."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from .discrepancy import DiscrepancyReport, discrepancy_report, grad_T, standard_errors
from .errors import ConfigError, SaddlefitError
from .likelihood import _fd_steps, spa_loglik, spa_loglik2, spa_loglik_grad, spa_loglik_hess
from .saddlepoint import solve_saddlepoint

CONVERGED = "Converged"
MAX_ITER = "MaxIter"
LINE_SEARCH_FAILED = "LineSearchFailed"

TRANSFORM_FOR_CONSTRAINT = {"positive": "log", "unit": "logit", "real": "identity"}


# -- transforms --------------------------------------------------------------
def _kinds(transforms, p):
    if transforms is None:
        return ("identity",) * p
    kinds = tuple(transforms)
    if len(kinds) != p:
        raise ConfigError(f"{len(kinds)} transforms given for {p} parameters")
    bad = [k for k in kinds if k not in ("log", "logit", "identity")]
    if bad:
        raise ConfigError(f"unknown transforms {bad}")
    return kinds


def transforms_for(constraints):
    """Default transform per parameter constraint."""
    return tuple(TRANSFORM_FOR_CONSTRAINT[c] for c in constraints)


def to_free(theta, kinds):
    z = np.array(theta, dtype=float)
    for i, k in enumerate(kinds):
        if k == "log":
            z[i] = np.log(theta[i])
        elif k == "logit":
            z[i] = logit(theta[i])
    return z


def from_free(z, kinds):
    theta = np.array(z, dtype=float)
    for i, k in enumerate(kinds):
        if k == "log":
            theta[i] = np.exp(z[i])
        elif k == "logit":
            theta[i] = expit(z[i])
    return theta


def jacobian_diag(z, kinds):
    """``d theta_i / d z_i``."""
    out = np.ones(len(kinds))
    for i, k in enumerate(kinds):
        if k == "log":
            out[i] = np.exp(z[i])
        elif k == "logit":
            s = expit(z[i])
            out[i] = s * (1.0 - s)
    return out


# -- results -----------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class FitResult:
    theta_hat: np.ndarray
    loglik: float
    grad_norm: float
    hessian: np.ndarray
    standard_errors: np.ndarray
    status: str
    objective_kind: str
    iterations: int = 0

    @property
    def converged(self):
        return self.status == CONVERGED

    def to_dict(self):
        return {
            "theta": self.theta_hat.tolist(),
            "se": self.standard_errors.tolist(),
            "loglik": self.loglik,
            "status": self.status,
        }

    def to_json(self):
        return json.dumps(self.to_dict())


# -- optimizer ---------------------------------------------------------------
def _safe(f, theta):
    # trial points far outside the domain are expected during line searches
    try:
        with np.errstate(all="ignore"):
            v = f(theta)
    except (SaddlefitError, FloatingPointError, ValueError, np.linalg.LinAlgError):
        return None
    v = np.asarray(v, dtype=float)
    return v if np.all(np.isfinite(v)) else None


def maximize(f, grad, theta0, transforms=None, tol=1e-6, max_iter=500, step_floor=1e-12,
             hessian=None, polish=True):
    """Maximize ``f`` by BFGS on the free coordinates, then polish by Newton.

    ``grad`` returns the gradient in the original coordinates.  Failing
    evaluations count as ``-inf`` during the line search.  Convergence means
    ``|grad| <= tol * (1 + |f|)``.  Polishing takes Newton steps in the
    original coordinates with ``hessian`` (if given) while they reduce the
    gradient norm; it pushes the stationary point close to machine precision.

    Returns ``(theta, f, grad, status, iterations)``.
    """
    theta = np.array(theta0, dtype=float).reshape(-1)
    p = theta.shape[0]
    kinds = _kinds(transforms, p)
    z = to_free(theta, kinds)

    def phi(zz):
        th = from_free(zz, kinds)
        v = _safe(f, th)
        return np.inf if v is None else -float(v)

    def dphi(zz):
        th = from_free(zz, kinds)
        g = _safe(grad, th)
        return None if g is None else -g * jacobian_diag(zz, kinds)

    fz = phi(z)
    gz = dphi(z)
    if not np.isfinite(fz) or gz is None:
        raise ConfigError("objective cannot be evaluated at the starting point")
    hinv = np.eye(p)
    status = MAX_ITER
    it = 0
    reset = False
    while it < max_iter:
        g_theta = -gz / jacobian_diag(z, kinds)
        if np.linalg.norm(g_theta) <= tol * (1.0 + abs(fz)):
            status = CONVERGED
            break
        direction = -hinv @ gz
        slope = float(gz @ direction)
        if slope >= 0:
            hinv = np.eye(p)
            direction = -gz
            slope = float(gz @ direction)
        lam = 1.0
        accepted = False
        while lam * np.linalg.norm(direction) > step_floor * (1.0 + np.linalg.norm(z)):
            zn = z + lam * direction
            fn = phi(zn)
            if np.isfinite(fn) and fn <= fz + 1e-4 * lam * slope:
                gn = dphi(zn)
                if gn is not None:
                    accepted = True
                    break
            lam *= 0.5
        if not accepted:
            if not reset:
                hinv = np.eye(p)
                reset = True
                continue
            status = LINE_SEARCH_FAILED
            break
        reset = False
        s = zn - z
        y = gn - gz
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if it == 0:
                hinv = np.eye(p) * (sy / float(y @ y))
            rho = 1.0 / sy
            v = np.eye(p) - rho * np.outer(s, y)
            hinv = v @ hinv @ v.T + rho * np.outer(s, s)
        z, fz, gz = zn, fn, gn
        it += 1
    theta = from_free(z, kinds)
    g_theta = -gz / jacobian_diag(z, kinds)
    fval = -fz
    if status == LINE_SEARCH_FAILED and np.linalg.norm(g_theta) <= tol * (1.0 + abs(fval)):
        status = CONVERGED
    if polish and hessian is not None and status != MAX_ITER:
        theta, fval, g_theta = _polish(f, grad, hessian, theta, fval, g_theta)
        if np.linalg.norm(g_theta) <= tol * (1.0 + abs(fval)):
            status = CONVERGED
    return theta, fval, g_theta, status, it


def _polish(f, grad, hessian, theta, fval, g, steps=6):
    gn = np.linalg.norm(g)
    for _ in range(steps):
        if gn == 0.0:
            break
        h = _safe(hessian, theta)
        if h is None:
            break
        try:
            if np.any(np.linalg.eigvalsh(h) >= 0):
                break
            cand = theta - np.linalg.solve(h, g)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(cand)):
            break
        gc = _safe(grad, cand)
        fc = _safe(f, cand)
        if gc is None or fc is None or not np.linalg.norm(gc) < gn:
            break
        theta, fval, g, gn = cand, float(fc), gc, np.linalg.norm(gc)
    return theta, fval, g


def _finish(theta, fval, g, status, it, hess, kind):
    return FitResult(theta, float(fval), float(np.linalg.norm(g)), hess,
                     standard_errors(hess), status, kind, it)


def fd_gradient(f, theta):
    theta = np.asarray(theta, dtype=float)
    h = _fd_steps(theta)
    out = np.empty_like(theta)
    for i in range(theta.shape[0]):
        e = np.zeros_like(theta)
        e[i] = h[i]
        out[i] = (f(theta + e) - f(theta - e)) / (2.0 * h[i])
    return out


def fd_hessian(grad, theta):
    """Central differences of a gradient function, symmetrized."""
    theta = np.asarray(theta, dtype=float)
    h = _fd_steps(theta)
    p = theta.shape[0]
    hess = np.empty((p, p))
    for i in range(p):
        e = np.zeros(p)
        e[i] = h[i]
        hess[:, i] = (np.asarray(grad(theta + e)) - np.asarray(grad(theta - e))) / (2.0 * h[i])
    return 0.5 * (hess + hess.T)


def fd_hessian_of_value(f, theta):
    """Second differences of a scalar function (step ``eps**(1/4)``)."""
    theta = np.asarray(theta, dtype=float)
    h = np.finfo(float).eps ** 0.25 * (1.0 + np.abs(theta))
    p = theta.shape[0]
    hess = np.empty((p, p))
    f0 = f(theta)
    for i in range(p):
        ei = np.zeros(p)
        ei[i] = h[i]
        hess[i, i] = (f(theta + ei) - 2.0 * f0 + f(theta - ei)) / h[i] ** 2
        for j in range(i):
            ej = np.zeros(p)
            ej[j] = h[j]
            hess[i, j] = hess[j, i] = (f(theta + ei + ej) - f(theta + ei - ej) - f(theta - ei + ej)
                                      + f(theta - ei - ej)) / (4.0 * h[i] * h[j])
    return hess


# -- public fitting routines -------------------------------------------------
def find_spa_mle(node, x, theta0, transforms=None, objective="spa", tol=1e-6, max_iter=500,
                 polish=True, hess_method="fd") -> FitResult:
    """Maximize the saddlepoint log-likelihood (``"spa"``) or its second-order version (``"spa2"``)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if objective == "spa":
        def f(th):
            return spa_loglik(node, th, x)

        def g(th):
            return spa_loglik_grad(node, th, x)
    elif objective == "spa2":
        def f(th):
            return spa_loglik2(node, th, x)

        def g(th):
            sol = solve_saddlepoint(node, th, x)
            return spa_loglik_grad(node, th, x, sol) + grad_T(node, th, x, sol)
    else:
        raise ConfigError(f"unknown objective {objective!r}")

    if objective == "spa":
        def hess(th):
            return spa_loglik_hess(node, th, x, method=hess_method)
    else:
        def hess(th):
            return fd_hessian(g, th)

    theta, fval, gv, status, it = maximize(f, g, theta0, transforms, tol, max_iter,
                                           hessian=hess if polish else None, polish=polish)
    return _finish(theta, fval, gv, status, it, _safe_hess(hess, theta), objective)


def _safe_hess(hess, theta):
    h = _safe(hess, theta)
    return np.full((theta.shape[0],) * 2, np.nan) if h is None else h


def find_true_mle(true_loglik, x, theta0, transforms=None, grad=None, tol=1e-6, max_iter=500,
                  polish=True) -> FitResult:
    """Maximize a model-supplied exact log-likelihood ``true_loglik(theta, x)``.

    Without an analytic ``grad(theta, x)`` the gradient is taken by central
    finite differences.
    """
    x = np.asarray(x, dtype=float)

    def f(th):
        return true_loglik(th, x)

    if grad is None:
        def g(th):
            return fd_gradient(f, th)

        def hess(th):
            return fd_hessian_of_value(f, th)
    else:
        def g(th):
            return np.asarray(grad(th, x), dtype=float)

        def hess(th):
            return fd_hessian(g, th)

    theta, fval, gv, status, it = maximize(f, g, theta0, transforms, tol, max_iter,
                                           hessian=hess if polish else None, polish=polish)
    return _finish(theta, fval, gv, status, it, _safe_hess(hess, theta), "true_oracle")


def fit_with_discrepancy(node, x, theta0, transforms=None, **opts):
    """Saddlepoint MLE followed by the approximated discrepancy at it."""
    hess_method = opts.pop("hess_method", "fd")
    fit = find_spa_mle(node, x, theta0, transforms, hess_method=hess_method, **opts)
    report = discrepancy_report(node, fit.theta_hat, x, hess_method=hess_method)
    return fit, report


__all__ = [
    "FitResult", "DiscrepancyReport", "find_spa_mle", "find_true_mle", "fit_with_discrepancy",
    "maximize", "transforms_for", "to_free", "from_free", "fd_gradient", "fd_hessian",
    "fd_hessian_of_value", "CONVERGED", "MAX_ITER", "LINE_SEARCH_FAILED",
]
