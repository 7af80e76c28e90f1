"""Checked entry points for evaluating CGF nodes.

These wrap the node methods with dimension, domain and parameter checks, and
provide :func:`differentiate_wrt_params` for exact theta-derivatives of any of
them.
"""

from __future__ import annotations

import numpy as np

from .. import dual as ad
from ..errors import DimensionMismatch, DomainError
from .nodes import CgfNode


def _vector(x, name):
    if not isinstance(x, ad.Dual):
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            x = x.reshape(1)
    if len(ad._shape(x)) != 1:
        raise DimensionMismatch(f"{name} must be a 1-D vector, got shape {ad._shape(x)}")
    if not np.all(np.isfinite(ad.value(x))):
        raise DomainError(f"{name} has non-finite entries")
    return x


def check_theta(node: CgfNode, theta):
    theta = _vector(theta, "theta")
    problems = node.param_problems(theta)
    if problems:
        raise DomainError("; ".join(problems))
    return theta


def check_point(node: CgfNode, t, theta):
    """Validate and coerce ``(t, theta)``; returns the coerced pair."""
    theta = check_theta(node, theta)
    t = _vector(t, "t")
    if ad._shape(t)[0] != node.dim:
        raise DimensionMismatch(f"t has length {ad._shape(t)[0]}, node dimension is {node.dim}")
    if not node.in_domain(t, theta):
        raise DomainError(f"t = {np.asarray(ad.value(t))} lies outside the CGF domain")
    return t, theta


def _check_vectors(node, vs):
    out = []
    for v in vs:
        if not isinstance(v, ad.Dual):
            v = np.asarray(v, dtype=float)
        if ad._shape(v)[0] != node.dim:
            raise DimensionMismatch(f"contraction vector has leading length {ad._shape(v)[0]}, "
                                    f"node dimension is {node.dim}")
        out.append(v)
    return out


def eval_K(node, t, theta):
    t, theta = check_point(node, t, theta)
    return node.K(t, theta)


def grad_t(node, t, theta):
    t, theta = check_point(node, t, theta)
    return node.K1(t, theta)


def hess_t(node, t, theta):
    t, theta = check_point(node, t, theta)
    return node.K2(t, theta)


def K3_contract(node, t, theta, v1, v2, v3):
    t, theta = check_point(node, t, theta)
    return node.K3(t, theta, *_check_vectors(node, (v1, v2, v3)))


def K4_contract(node, t, theta, v1, v2, v3, v4):
    t, theta = check_point(node, t, theta)
    return node.K4(t, theta, *_check_vectors(node, (v1, v2, v3, v4)))


def differentiate_wrt_params(f, node, t, theta, *vectors, seeds=None, t_seed=None):
    """Exact derivative of ``f(node, t, theta, *vectors)`` with respect to theta.

    ``seeds`` is an array of directions of shape ``(s, p)`` (default: the
    identity, giving the full gradient).  ``t_seed`` of shape ``(s, d)``
    perturbs ``t`` along with theta, which yields total derivatives when it
    holds ``d t_hat / d theta`` for each seed.

    Returns an array of shape ``(s,) + f_shape``; for scalar ``f`` and default
    seeds this is the gradient row.
    """
    theta = np.asarray(theta, dtype=float)
    t = np.asarray(t, dtype=float).reshape(-1)
    th = ad.seed(theta, seeds)
    n = th.n_seeds
    if t_seed is not None:
        t = ad.Dual(t, np.asarray(t_seed, dtype=float).reshape(n, -1), th.tag)
    out = f(node, t, th, *vectors)
    return np.asarray(ad.derivative(out, th.tag, n, np.shape(ad.value(out))))
