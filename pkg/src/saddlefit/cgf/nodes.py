"""CGF nodes and combinators.

Every node exposes the same five operators, all generic over
:class:`~saddlefit.dual.Dual` entries in ``t``, ``theta`` and the contraction
vectors:

``K(t, theta)``            scalar
``K1(t, theta)``           gradient in t, shape ``(d,)``
``K2(t, theta)``           Hessian in t, shape ``(d, d)``
``K3(t, theta, a, b, c)``  third-derivative tensor contracted with three vectors
``K4(t, theta, a, b, c, e)``

Contraction vectors have shape ``(d,) + batch``; the batch axes broadcast
against each other, so a single call can evaluate many contractions (e.g.
every triple of LDL columns at once).

Nodes are immutable.  They do no validation on the hot path; the wrappers in
:mod:`saddlefit.cgf.ops` check dimensions, domains and parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import dual as ad
from ..errors import ConfigError
from .adapters import Adapter, as_adapter

_PROB_TOL = 1e-9


def _scalar(x):
    return float(np.asarray(ad.value(x)).reshape(()))


def _wsum(w, a):
    """``sum_i w_i a_i`` over the leading axis of a batched vector."""
    nb = len(ad._shape(a)) - 1
    if nb:
        w = w.reshape((ad._shape(w)[0],) + (1,) * nb)
    return (w * a).sum(axis=0)


def _pull_back(matrix, v):
    """``matrix.T @ v`` applied along the leading axis of a batched vector."""
    shape = ad._shape(v)
    flat = v.reshape((shape[0], -1)) if len(shape) > 1 else v
    out = matrix.T @ flat
    if len(shape) > 1:
        out = out.reshape((matrix.shape[1],) + tuple(shape[1:]))
    return out


class CgfNode:
    """Base class.  ``singular`` marks nodes whose K'' is never invertible.

    ``t`` is a single point of shape ``(dim,)``.  The direction vectors of
    ``K3``/``K4`` may carry trailing batch axes, ``(dim, *batch)``.
    """

    kind = "node"
    singular = False

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def K(self, t, theta):
        raise NotImplementedError

    def K1(self, t, theta):
        raise NotImplementedError

    def K2(self, t, theta):
        raise NotImplementedError

    def K3(self, t, theta, a, b, c):
        raise NotImplementedError

    def K4(self, t, theta, a, b, c, e):
        raise NotImplementedError

    def in_domain(self, t, theta) -> bool:
        return True

    def param_problems(self, theta) -> list:
        """Human-readable reasons why ``theta`` is invalid for this node."""
        return []

    def to_dict(self) -> dict:
        raise NotImplementedError


# -- base distributions ------------------------------------------------------
@dataclass(frozen=True, eq=False)
class Gamma(CgfNode):
    """Scalar gamma variable.

    ``params`` yields two local values: (shape, rate) under the
    ``"shape_rate"`` parameterization, or (mean-scale omega, rate tau) with
    shape ``omega * tau`` under ``"mean_rate"``.
    """

    params: Adapter
    parameterization: str = "shape_rate"

    kind = "gamma"

    def __post_init__(self):
        object.__setattr__(self, "params", as_adapter(self.params))
        if self.parameterization not in ("shape_rate", "mean_rate"):
            raise ConfigError(f"unknown gamma parameterization {self.parameterization!r}")
        if self.params.size != 2:
            raise ConfigError("gamma node needs two local parameters")

    @property
    def dim(self):
        return 1

    def _shape_rate(self, theta):
        loc = self.params(theta)
        a, b = loc[0], loc[1]
        if self.parameterization == "mean_rate":
            a = a * b
        return a, b

    def K(self, t, theta):
        a, b = self._shape_rate(theta)
        return -a * np.log1p(-t[0] / b)

    def K1(self, t, theta):
        a, b = self._shape_rate(theta)
        return (a / (b - t[0])).reshape((1,))

    def K2(self, t, theta):
        a, b = self._shape_rate(theta)
        return (a / (b - t[0]) ** 2).reshape((1, 1))

    def K3(self, t, theta, x, y, z):
        a, b = self._shape_rate(theta)
        return 2.0 * a / (b - t[0]) ** 3 * (x[0] * y[0] * z[0])

    def K4(self, t, theta, x, y, z, w):
        a, b = self._shape_rate(theta)
        return 6.0 * a / (b - t[0]) ** 4 * (x[0] * y[0] * z[0] * w[0])

    def in_domain(self, t, theta):
        _, b = self._shape_rate(ad.value(theta))
        return bool(ad.value(t)[0] < b)

    def param_problems(self, theta):
        a, b = self._shape_rate(ad.value(theta))
        out = []
        if not a > 0:
            out.append(f"gamma shape must be positive, got {a}")
        if not b > 0:
            out.append(f"gamma rate must be positive, got {b}")
        return out

    def to_dict(self):
        return {"kind": self.kind, "params": self.params.to_dict(),
                "parameterization": self.parameterization}


@dataclass(frozen=True, eq=False)
class Poisson(CgfNode):
    rate: Adapter

    kind = "poisson"

    def __post_init__(self):
        object.__setattr__(self, "rate", as_adapter(self.rate))
        if self.rate.size != 1:
            raise ConfigError("poisson node needs one local parameter")

    @property
    def dim(self):
        return 1

    def _lam_et(self, t, theta):
        return self.rate(theta)[0] * np.exp(t[0])

    def K(self, t, theta):
        return self.rate(theta)[0] * np.expm1(t[0])

    def K1(self, t, theta):
        return self._lam_et(t, theta).reshape((1,))

    def K2(self, t, theta):
        return self._lam_et(t, theta).reshape((1, 1))

    def K3(self, t, theta, x, y, z):
        return self._lam_et(t, theta) * (x[0] * y[0] * z[0])

    def K4(self, t, theta, x, y, z, w):
        return self._lam_et(t, theta) * (x[0] * y[0] * z[0] * w[0])

    def param_problems(self, theta):
        lam = _scalar(self.rate(ad.value(theta))[0])
        return [] if lam > 0 else [f"poisson rate must be positive, got {lam}"]

    def to_dict(self):
        return {"kind": self.kind, "rate": self.rate.to_dict()}


@dataclass(frozen=True, eq=False)
class MultivariateNormal(CgfNode):
    """Gaussian with parameter-dependent mean and a fixed covariance."""

    mean: Adapter
    cov: np.ndarray

    kind = "mvn"

    def __post_init__(self):
        object.__setattr__(self, "mean", as_adapter(self.mean))
        cov = np.array(np.atleast_2d(self.cov), dtype=float)
        if cov.shape != (self.mean.size, self.mean.size):
            raise ConfigError("covariance shape does not match the mean")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
            raise ConfigError("covariance must be symmetric")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ConfigError("covariance must be positive definite") from exc
        cov.setflags(write=False)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self):
        return self.mean.size

    def K(self, t, theta):
        return t @ self.mean(theta) + 0.5 * (t @ (self.cov @ t))

    def K1(self, t, theta):
        return self.mean(theta) + self.cov @ t

    def K2(self, t, theta):
        return self.cov

    def K3(self, t, theta, x, y, z):
        return np.zeros(np.broadcast_shapes(*(ad._shape(v)[1:] for v in (x, y, z))))

    def K4(self, t, theta, x, y, z, w):
        return np.zeros(np.broadcast_shapes(*(ad._shape(v)[1:] for v in (x, y, z, w))))

    def to_dict(self):
        return {"kind": self.kind, "mean": self.mean.to_dict(), "cov": self.cov.tolist()}


@dataclass(frozen=True, eq=False)
class Multinomial(CgfNode):
    """Multinomial counts; ``params`` yields ``(N, p_1, ..., p_d)``.

    N may be any positive real.  The counts sum to N, so K'' is singular and
    the node is only usable as an observable beneath a :class:`LinearMap`.

    K is written as ``N log(1 + sum_i p_i (e^{t_i} - 1))``.  On the simplex this
    is the usual ``N log sum_i p_i e^{t_i}``; off it, it keeps ``K(0) = 0`` and
    makes the p_i free coordinates, so ``dK'(0)/dp_i = N e_i``.  The t-derivatives
    are N times the cumulants of a categorical variable taking value ``e_i``
    with weight ``w_i = p_i e^{t_i} / D`` and value 0 with the leftover weight
    ``w_0 = (1 - sum p) / D``.  Contractions use those weights and centred
    vectors, costing O(d) each.
    """

    params: Adapter

    kind = "multinomial"
    singular = True

    def __post_init__(self):
        object.__setattr__(self, "params", as_adapter(self.params))
        if self.params.size < 2:
            raise ConfigError("multinomial node needs N and at least one probability")

    @property
    def dim(self):
        return self.params.size - 1

    def _split(self, theta):
        loc = self.params(theta)
        return loc[0], loc[1:]

    def _weights(self, t, theta):
        n, p = self._split(theta)
        shift = max(float(np.max(ad.value(t))), 0.0)
        e = p * np.exp(t - shift)
        e0 = (1.0 - p.sum()) * np.exp(-shift)
        s = e.sum() + e0
        # off the simplex s can vanish; the NaNs are rejected downstream
        with np.errstate(invalid="ignore", divide="ignore"):
            return n, e / s, e0 / s, shift, s

    def K(self, t, theta):
        n, _, _, shift, s = self._weights(t, theta)
        return n * (shift + np.log(s))

    def K1(self, t, theta):
        n, w, _, _, _ = self._weights(t, theta)
        return n * w

    def K2(self, t, theta):
        n, w, _, _, _ = self._weights(t, theta)
        return n * (w[:, None] * np.eye(self.dim) - w[:, None] * w[None, :])

    @staticmethod
    def _moment(w, w0, centred, means):
        prod = centred[0]
        tail = -means[0]
        for c, m in zip(centred[1:], means[1:]):
            prod = prod * c
            tail = tail * (-m)
        return _wsum(w, prod) + w0 * tail

    def _centre(self, w, vs):
        nb = max(len(ad._shape(v)) for v in vs) - 1
        vs = [v.reshape(ad._shape(v) + (1,) * (nb + 1 - len(ad._shape(v)))) for v in vs]
        means = [_wsum(w, v) for v in vs]
        return [v - m for v, m in zip(vs, means)], means

    def K3(self, t, theta, x, y, z):
        n, w, w0, _, _ = self._weights(t, theta)
        c, m = self._centre(w, (x, y, z))
        return n * self._moment(w, w0, c, m)

    def K4(self, t, theta, x, y, z, u):
        n, w, w0, _, _ = self._weights(t, theta)
        (xc, yc, zc, uc), (mx, my, mz, mu) = self._centre(w, (x, y, z, u))

        def m2(a, am, b, bm):
            return self._moment(w, w0, (a, b), (am, bm))

        pairs = (m2(xc, mx, yc, my) * m2(zc, mz, uc, mu)
                 + m2(xc, mx, zc, mz) * m2(yc, my, uc, mu)
                 + m2(xc, mx, uc, mu) * m2(yc, my, zc, mz))
        return n * (self._moment(w, w0, (xc, yc, zc, uc), (mx, my, mz, mu)) - pairs)

    def param_problems(self, theta):
        n, p = self._split(ad.value(theta))
        n, p = float(n), np.asarray(p, dtype=float)
        out = []
        if not n > 0:
            out.append(f"multinomial size must be positive, got {n}")
        if np.any(p < 0) or abs(p.sum() - 1.0) > _PROB_TOL:
            out.append("multinomial probabilities must be non-negative and sum to one")
        return out

    def to_dict(self):
        return {"kind": self.kind, "params": self.params.to_dict()}


@dataclass(frozen=True, eq=False)
class BirthDeathOffspring(CgfNode):
    """Population size at time 1 of a linear birth-death process started from one individual.

    With ``r = lambda - mu`` and ``phi = expm1(r) / r`` the generating function
    is ``(1 - (s-1)(mu*phi - 1)) / (1 - (s-1)*lambda*phi)``, which is the
    classical expression rewritten so that ``lambda == mu`` needs no special
    case.  Each bracket ``1 - c (e^t - 1)`` contributes ``log1p(-c expm1(t))``
    to K, and its t-derivatives are polynomials in the tilted weight
    ``w = -c e^t / (1 - c expm1(t))``.
    """

    params: Adapter

    kind = "birth_death"

    def __post_init__(self):
        object.__setattr__(self, "params", as_adapter(self.params))
        if self.params.size != 2:
            raise ConfigError("birth-death node needs (lambda, mu)")

    @property
    def dim(self):
        return 1

    def _coefs(self, theta):
        loc = self.params(theta)
        lam, mu = loc[0], loc[1]
        r = lam - mu
        if abs(_scalar(r)) < 1e-4:
            phi = 1.0 + r * (0.5 + r * (1.0 / 6 + r * (1.0 / 24 + r / 120.0)))
        else:
            phi = np.expm1(r) / r
        return mu * phi - 1.0, lam * phi

    def _weights(self, t, theta):
        c1, c2 = self._coefs(theta)
        et = np.exp(t[0])
        em = np.expm1(t[0])
        return -c1 * et / (1.0 - c1 * em), -c2 * et / (1.0 - c2 * em)

    def K(self, t, theta):
        c1, c2 = self._coefs(theta)
        em = np.expm1(t[0])
        return np.log1p(-c1 * em) - np.log1p(-c2 * em)

    def K1(self, t, theta):
        w1, w2 = self._weights(t, theta)
        return (w1 - w2).reshape((1,))

    def K2(self, t, theta):
        w1, w2 = self._weights(t, theta)
        return (w1 * (1.0 - w1) - w2 * (1.0 - w2)).reshape((1, 1))

    def K3(self, t, theta, x, y, z):
        w1, w2 = self._weights(t, theta)

        def g(w):
            return w * (1.0 - w) * (1.0 - 2.0 * w)

        return (g(w1) - g(w2)) * (x[0] * y[0] * z[0])

    def K4(self, t, theta, x, y, z, u):
        w1, w2 = self._weights(t, theta)

        def g(w):
            return w * (1.0 - w) * (1.0 - 6.0 * w + 6.0 * w * w)

        return (g(w1) - g(w2)) * (x[0] * y[0] * z[0] * u[0])

    def in_domain(self, t, theta):
        c1, c2 = self._coefs(ad.value(theta))
        em = np.expm1(float(ad.value(t)[0]))
        return bool(1.0 - c1 * em > 0 and 1.0 - c2 * em > 0)

    def param_problems(self, theta):
        loc = np.asarray(self.params(ad.value(theta)), dtype=float)
        out = []
        if not loc[0] > 0:
            out.append(f"birth rate must be positive, got {loc[0]}")
        if not loc[1] > 0:
            out.append(f"death rate must be positive, got {loc[1]}")
        return out

    def to_dict(self):
        return {"kind": self.kind, "params": self.params.to_dict()}


# -- combinators -------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class IidSum(CgfNode):
    """Sum of ``n`` i.i.d. copies of ``child``; ``n`` is a positive real or an adapter."""

    n: object
    child: CgfNode

    kind = "iid_sum"

    def __post_init__(self):
        if isinstance(self.n, (Adapter, dict)):
            n = as_adapter(self.n)
            if n.size != 1:
                raise ConfigError("iid_sum count adapter must yield one value")
        else:
            n = float(self.n)
        object.__setattr__(self, "n", n)

    @property
    def singular(self):
        return self.child.singular

    @property
    def dim(self):
        return self.child.dim

    def count(self, theta):
        if isinstance(self.n, Adapter):
            return self.n(theta)[0]
        return self.n

    def K(self, t, theta):
        return self.count(theta) * self.child.K(t, theta)

    def K1(self, t, theta):
        return self.count(theta) * self.child.K1(t, theta)

    def K2(self, t, theta):
        return self.count(theta) * self.child.K2(t, theta)

    def K3(self, t, theta, x, y, z):
        return self.count(theta) * self.child.K3(t, theta, x, y, z)

    def K4(self, t, theta, x, y, z, u):
        return self.count(theta) * self.child.K4(t, theta, x, y, z, u)

    def in_domain(self, t, theta):
        return self.child.in_domain(t, theta)

    def param_problems(self, theta):
        n = _scalar(self.count(ad.value(theta)))
        out = [] if n > 0 else [f"iid_sum count must be positive, got {n}"]
        return out + self.child.param_problems(theta)

    def to_dict(self):
        n = self.n.to_dict() if isinstance(self.n, Adapter) else self.n
        return {"kind": self.kind, "n": n, "child": self.child.to_dict()}


@dataclass(frozen=True, eq=False)
class LinearMap(CgfNode):
    """``X = A Y`` for a fixed real matrix ``A`` of shape ``(d_X, d_Y)``."""

    matrix: np.ndarray
    child: CgfNode

    kind = "linear_map"

    def __post_init__(self):
        m = np.array(np.atleast_2d(self.matrix), dtype=float)
        if m.shape[1] != self.child.dim:
            raise ConfigError(f"matrix has {m.shape[1]} columns but child has dimension {self.child.dim}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self):
        return self.matrix.shape[0]

    def K(self, t, theta):
        return self.child.K(t @ self.matrix, theta)

    def K1(self, t, theta):
        return self.matrix @ self.child.K1(t @ self.matrix, theta)

    def K2(self, t, theta):
        return self.matrix @ self.child.K2(t @ self.matrix, theta) @ self.matrix.T

    def K3(self, t, theta, x, y, z):
        m = self.matrix
        return self.child.K3(t @ m, theta, _pull_back(m, x), _pull_back(m, y), _pull_back(m, z))

    def K4(self, t, theta, x, y, z, u):
        m = self.matrix
        return self.child.K4(t @ m, theta, _pull_back(m, x), _pull_back(m, y),
                             _pull_back(m, z), _pull_back(m, u))

    def in_domain(self, t, theta):
        return self.child.in_domain(np.asarray(ad.value(t)) @ self.matrix, theta)

    def param_problems(self, theta):
        return self.child.param_problems(theta)

    def to_dict(self):
        return {"kind": self.kind, "matrix": self.matrix.tolist(), "child": self.child.to_dict()}


@dataclass(frozen=True, eq=False)
class Concat(CgfNode):
    """Independent blocks stacked into one observable."""

    children: tuple
    _offsets: tuple = field(init=False, repr=False)

    kind = "concat"

    def __post_init__(self):
        children = tuple(self.children)
        if not children:
            raise ConfigError("concat needs at least one child")
        object.__setattr__(self, "children", children)
        offsets = np.concatenate([[0], np.cumsum([c.dim for c in children])])
        object.__setattr__(self, "_offsets", tuple(int(o) for o in offsets))

    @property
    def singular(self):
        return any(c.singular for c in self.children)

    @property
    def dim(self):
        return self._offsets[-1]

    def _blocks(self):
        o = self._offsets
        return [(c, slice(o[i], o[i + 1])) for i, c in enumerate(self.children)]

    def K(self, t, theta):
        return sum(c.K(t[s], theta) for c, s in self._blocks())

    def K1(self, t, theta):
        return ad.concatenate([c.K1(t[s], theta) for c, s in self._blocks()])

    def K2(self, t, theta):
        return ad.block_diag([c.K2(t[s], theta) for c, s in self._blocks()])

    def K3(self, t, theta, x, y, z):
        return sum(c.K3(t[s], theta, x[s], y[s], z[s]) for c, s in self._blocks())

    def K4(self, t, theta, x, y, z, u):
        return sum(c.K4(t[s], theta, x[s], y[s], z[s], u[s]) for c, s in self._blocks())

    def in_domain(self, t, theta):
        tv = np.asarray(ad.value(t))
        return all(c.in_domain(tv[s], theta) for c, s in self._blocks())

    def param_problems(self, theta):
        return [p for c in self.children for p in c.param_problems(theta)]

    def to_dict(self):
        return {"kind": self.kind, "children": [c.to_dict() for c in self.children]}


@dataclass(frozen=True, eq=False)
class SumIndependent(CgfNode):
    """Sum of independent observables of equal dimension."""

    children: tuple

    kind = "sum_independent"

    def __post_init__(self):
        children = tuple(self.children)
        if not children:
            raise ConfigError("sum_independent needs at least one child")
        if len({c.dim for c in children}) != 1:
            raise ConfigError("sum_independent children must share a dimension")
        object.__setattr__(self, "children", children)

    @property
    def singular(self):
        # a sum is singular only if every summand is
        return all(c.singular for c in self.children)

    @property
    def dim(self):
        return self.children[0].dim

    def K(self, t, theta):
        return sum(c.K(t, theta) for c in self.children)

    def K1(self, t, theta):
        return sum(c.K1(t, theta) for c in self.children)

    def K2(self, t, theta):
        return sum(c.K2(t, theta) for c in self.children)

    def K3(self, t, theta, x, y, z):
        return sum(c.K3(t, theta, x, y, z) for c in self.children)

    def K4(self, t, theta, x, y, z, u):
        return sum(c.K4(t, theta, x, y, z, u) for c in self.children)

    def in_domain(self, t, theta):
        return all(c.in_domain(t, theta) for c in self.children)

    def param_problems(self, theta):
        return [p for c in self.children for p in c.param_problems(theta)]

    def to_dict(self):
        return {"kind": self.kind, "children": [c.to_dict() for c in self.children]}
