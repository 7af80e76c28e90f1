"""Forward-mode dual numbers over numpy arrays.

A :class:`Dual` carries a value array and one derivative array per seed
direction, stacked along a *leading* axis: ``der.shape == (n_seeds,) + val.shape``.
Values and derivatives may themselves be duals of a lower tag, which is how
second derivatives are obtained (dual-over-dual).  Each seeding call draws a
fresh, strictly increasing tag, so the most recently seeded level is always the
outermost one and perturbations of different levels never get confused.

Duals take part in ordinary numpy code through ``__array_ufunc__``: ``np.exp``,
``np.log``, arithmetic with ndarrays, ``@`` and ``np.sum`` all dispatch here.
"""

from __future__ import annotations

import itertools

import numpy as np
import scipy.linalg as sla

from .errors import SingularHessian

__all__ = [
    "Dual",
    "seed",
    "value",
    "derivative",
    "depth",
    "concatenate",
    "stack",
    "block_diag",
    "diagonal",
    "solve",
    "inv",
    "logdet",
    "ldl_of_inverse",
    "ldl_of_inverse_values",
]

_tag_counter = itertools.count(1)


def _shape(x):
    if isinstance(x, Dual):
        return x.shape
    return np.shape(x)


def _top(*xs):
    return max((x.tag for x in xs if isinstance(x, Dual)), default=0)


def _split(x, tag):
    if isinstance(x, Dual) and x.tag == tag:
        return x.val, x.der
    return x, None


def _reshape(x, shape):
    if isinstance(x, Dual):
        return x.reshape(shape)
    return np.reshape(x, shape)


def _lift(der, ndim):
    """Pad a derivative array so it broadcasts against values of rank ``ndim``."""
    s = _shape(der)
    extra = ndim - (len(s) - 1)
    if extra <= 0:
        return der
    return _reshape(der, (s[0],) + (1,) * extra + tuple(s[1:]))


def _broadcast(x, shape):
    if isinstance(x, Dual):
        n = _shape(x.der)[0]
        return Dual(_broadcast(x.val, shape), _broadcast(x.der, (n,) + tuple(shape)), x.tag)
    return np.broadcast_to(x, shape)


def _finish(val, der, tag):
    """Build a result, broadcasting a derivative that lost dimensions."""
    if der is None:
        return val
    vs = _shape(val)
    ds = _shape(der)
    if tuple(ds[1:]) != tuple(vs):
        der = _broadcast(_lift(der, len(vs)), (ds[0],) + tuple(vs))
    return Dual(val, der, tag)


def _add_der(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a + b


class Dual:
    """Array value with forward-mode derivatives along a leading seed axis."""

    __slots__ = ("val", "der", "tag")
    __array_priority__ = 1000

    def __init__(self, val, der, tag):
        self.val = val
        self.der = der
        self.tag = tag

    # -- structure ---------------------------------------------------------
    @property
    def shape(self):
        return tuple(_shape(self.val))

    @property
    def ndim(self):
        return len(self.shape)

    @property
    def n_seeds(self):
        return _shape(self.der)[0]

    def __repr__(self):
        return f"Dual(tag={self.tag}, val={self.val!r}, der={self.der!r})"

    def __len__(self):
        return self.shape[0]

    def __float__(self):
        raise TypeError("a Dual cannot be converted to float; use value()")

    def __bool__(self):
        raise TypeError("truth value of a Dual is ambiguous; compare value() instead")

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Dual(self.val[idx], self.der[(slice(None),) + idx], self.tag)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        val = _reshape(self.val, shape)
        return Dual(val, _reshape(self.der, (self.n_seeds,) + tuple(_shape(val))), self.tag)

    def swapaxes(self, a, b):
        if a >= 0 or b >= 0:
            raise ValueError("Dual.swapaxes only accepts negative axes")
        return Dual(_swapaxes(self.val, a, b), _swapaxes(self.der, a, b), self.tag)

    @property
    def T(self):
        if self.ndim < 2:
            return self
        if self.ndim != 2:
            raise ValueError("Dual.T is defined for 1-D and 2-D values only")
        return self.swapaxes(-1, -2)

    def sum(self, axis=None, dtype=None, out=None, keepdims=False):
        if out is not None:
            raise TypeError("out= is not supported for Dual")
        nd = self.ndim
        if axis is None:
            axes = tuple(range(nd))
        elif isinstance(axis, (tuple, list)):
            axes = tuple(a % nd for a in axis)
        else:
            axes = (axis % nd,)
        val = _sum(self.val, axes, keepdims)
        der = _sum(self.der, tuple(a + 1 for a in axes), keepdims)
        return Dual(val, der, self.tag)

    # -- operators ---------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return subtract(self, other)

    def __rsub__(self, other):
        return subtract(other, self)

    def __mul__(self, other):
        return multiply(self, other)

    def __rmul__(self, other):
        return multiply(other, self)

    def __truediv__(self, other):
        return divide(self, other)

    def __rtruediv__(self, other):
        return divide(other, self)

    def __neg__(self):
        return negative(self)

    def __pos__(self):
        return self

    def __pow__(self, other):
        return power(self, other)

    def __rpow__(self, other):
        return power(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method != "__call__" or kwargs.get("out") is not None:
            return NotImplemented
        fn = _UFUNCS.get(ufunc)
        if fn is None:
            return NotImplemented
        return fn(*inputs)


def _sum(x, axes, keepdims):
    if isinstance(x, Dual):
        return x.sum(axis=axes, keepdims=keepdims)
    return np.sum(x, axis=axes, keepdims=keepdims)


def _swapaxes(x, a, b):
    if isinstance(x, Dual):
        return x.swapaxes(a, b)
    return np.swapaxes(x, a, b)


# -- elementwise arithmetic ------------------------------------------------
def add(x, y):
    tag = _top(x, y)
    if not tag:
        return np.add(x, y)
    xv, xd = _split(x, tag)
    yv, yd = _split(y, tag)
    val = xv + yv
    nd = len(_shape(val))
    der = _add_der(None if xd is None else _lift(xd, nd), None if yd is None else _lift(yd, nd))
    return _finish(val, der, tag)


def subtract(x, y):
    tag = _top(x, y)
    if not tag:
        return np.subtract(x, y)
    xv, xd = _split(x, tag)
    yv, yd = _split(y, tag)
    val = xv - yv
    nd = len(_shape(val))
    der = None if xd is None else _lift(xd, nd)
    if yd is not None:
        der = -_lift(yd, nd) if der is None else der - _lift(yd, nd)
    return _finish(val, der, tag)


def multiply(x, y):
    tag = _top(x, y)
    if not tag:
        return np.multiply(x, y)
    xv, xd = _split(x, tag)
    yv, yd = _split(y, tag)
    val = xv * yv
    nd = len(_shape(val))
    der = None
    if xd is not None:
        der = _lift(xd, nd) * yv
    if yd is not None:
        der = _add_der(der, xv * _lift(yd, nd))
    return _finish(val, der, tag)


def divide(x, y):
    tag = _top(x, y)
    if not tag:
        return np.divide(x, y)
    xv, xd = _split(x, tag)
    yv, yd = _split(y, tag)
    val = xv / yv
    nd = len(_shape(val))
    der = None
    if xd is not None:
        der = _lift(xd, nd) / yv
    if yd is not None:
        der = _add_der(der, -(val * _lift(yd, nd)) / yv)
    return _finish(val, der, tag)


def negative(x):
    if not isinstance(x, Dual):
        return np.negative(x)
    return Dual(-x.val, -x.der, x.tag)


def power(x, y):
    tag = _top(x, y)
    if not tag:
        return np.power(x, y)
    xv, xd = _split(x, tag)
    yv, yd = _split(y, tag)
    val = xv**yv
    nd = len(_shape(val))
    der = None
    if xd is not None:
        der = _lift(xd, nd) * (yv * xv ** (yv - 1))
    if yd is not None:
        der = _add_der(der, _lift(yd, nd) * (val * np.log(xv)))
    return _finish(val, der, tag)


def _unary(f, df):
    def op(x):
        if not isinstance(x, Dual):
            return f(x)
        return Dual(f(x.val), x.der * df(x.val), x.tag)

    return op


exp = _unary(np.exp, np.exp)
log = _unary(np.log, lambda v: 1.0 / v)
log1p = _unary(np.log1p, lambda v: 1.0 / (1.0 + v))
expm1 = _unary(np.expm1, np.exp)
sqrt = _unary(np.sqrt, lambda v: 0.5 / np.sqrt(v))
square = _unary(np.square, lambda v: 2.0 * v)
reciprocal = _unary(np.reciprocal, lambda v: -1.0 / (v * v))


def matmul(x, y):
    tag = _top(x, y)
    if not tag:
        return np.matmul(x, y)
    xv, xd = _split(x, tag)
    yv, yd = _split(y, tag)
    val = xv @ yv
    der = None
    if xd is not None:
        # leading seed axis acts as a batch axis of x
        der = xd @ yv
    if yd is not None:
        if len(_shape(yv)) == 1:
            term = (xv @ yd[..., None])[..., 0]
        else:
            term = xv @ _lift(yd, len(_shape(yv)))
        der = _add_der(der, term)
    return _finish(val, der, tag)


_UFUNCS = {
    np.add: add,
    np.subtract: subtract,
    np.multiply: multiply,
    np.true_divide: divide,
    np.negative: negative,
    np.power: power,
    np.exp: exp,
    np.log: log,
    np.log1p: log1p,
    np.expm1: expm1,
    np.sqrt: sqrt,
    np.square: square,
    np.reciprocal: reciprocal,
    np.matmul: matmul,
}


# -- construction and extraction ---------------------------------------------
def seed(x, directions=None):
    """Seed ``x`` with derivative directions under a fresh (outermost) tag.

    ``directions`` has shape ``(n_seeds,) + x.shape``; the default is the
    identity, giving one seed per entry of a 1-D ``x``.
    """
    if directions is None:
        n = int(np.prod(_shape(x)))
        directions = np.eye(n).reshape((n,) + tuple(_shape(x)))
    return Dual(x if isinstance(x, Dual) else np.asarray(x, dtype=float),
                np.asarray(directions, dtype=float), next(_tag_counter))


def value(x):
    """Strip every dual level and return plain floats."""
    while isinstance(x, Dual):
        x = x.val
    return x


def derivative(x, tag, n_seeds, shape=None):
    """Derivative of ``x`` with respect to the seeds of ``tag`` (zeros if absent)."""
    if isinstance(x, Dual) and x.tag == tag:
        return x.der
    if isinstance(x, Dual) and x.tag > tag:
        raise ValueError("derivative requested for an inner tag; extract the outer level first")
    if shape is None:
        shape = _shape(x)
    return np.zeros((n_seeds,) + tuple(shape))


def depth(x):
    """Number of nested dual levels."""
    if not isinstance(x, Dual):
        return 0
    return 1 + max(depth(x.val), depth(x.der))


def concatenate(seq, axis=0):
    seq = list(seq)
    tag = _top(*seq)
    if not tag:
        return np.concatenate([np.asarray(s) for s in seq], axis=axis)
    nd = len(_shape(seq[0]))
    axis = axis % nd
    n = next(s.n_seeds for s in seq if isinstance(s, Dual) and s.tag == tag)
    vals, ders = [], []
    for s in seq:
        v, d = _split(s, tag)
        vals.append(v)
        ders.append(np.zeros((n,) + tuple(_shape(v))) if d is None else d)
    return Dual(concatenate(vals, axis), concatenate(ders, axis + 1), tag)


def stack(seq, axis=0):
    seq = list(seq)
    out = []
    for s in seq:
        shape = tuple(_shape(s))
        ax = axis % (len(shape) + 1)
        out.append(_reshape(s, shape[:ax] + (1,) + shape[ax:]))
    return concatenate(out, axis=axis)


def block_diag(blocks):
    """Block-diagonal matrix from square blocks (floats or duals)."""
    sizes = [_shape(b)[0] for b in blocks]
    total = sum(sizes)
    rows = []
    start = 0
    for b, s in zip(blocks, sizes):
        parts = []
        if start:
            parts.append(np.zeros((s, start)))
        parts.append(b)
        if total - start - s:
            parts.append(np.zeros((s, total - start - s)))
        rows.append(concatenate(parts, axis=1) if len(parts) > 1 else b)
        start += s
    return concatenate(rows, axis=0) if len(rows) > 1 else rows[0]


def diagonal(x):
    """Main diagonal over the last two axes."""
    n = _shape(x)[-1]
    r = np.arange(n)
    return x[..., r, r]


# -- linear algebra ----------------------------------------------------------
def _solve_mat(a, b):
    """Solve ``a @ X = b`` for square ``a`` and ``b`` of shape ``(..., d, m)``."""
    tag = _top(a, b)
    if not tag:
        return np.linalg.solve(a, b)
    av, ad = _split(a, tag)
    bv, bd = _split(b, tag)
    xv = _solve_mat(av, bv)
    nd = len(_shape(xv))
    rhs = None if bd is None else _lift(bd, nd)
    if ad is not None:
        corr = _lift(ad, nd) @ xv
        rhs = -corr if rhs is None else rhs - corr
    if rhs is None:
        return xv
    return _finish(xv, _solve_mat(av, rhs), tag)


def solve(a, b):
    """Solve ``a x = b`` where ``b`` is a vector ``(d,)`` or a matrix ``(d, m)``."""
    if len(_shape(b)) == 1:
        return _solve_mat(a, b[:, None])[:, 0]
    return _solve_mat(a, b)


def inv(a):
    return _solve_mat(a, np.eye(_shape(a)[-1]))


def logdet(a):
    """Log-determinant of a symmetric positive definite matrix."""
    tag = _top(a)
    if not tag:
        try:
            c = np.linalg.cholesky(a)
        except np.linalg.LinAlgError as exc:
            raise SingularHessian("matrix is not positive definite") from exc
        return 2.0 * np.sum(np.log(np.diag(c)))
    av, ad = a.val, a.der
    ainv = inv(av)
    der = (ad * _swapaxes(ainv, -1, -2)).sum(axis=(-2, -1))
    return Dual(logdet(av), der, tag)


def ldl_of_inverse_values(k2):
    """Unit-lower ``A`` and positive ``d`` with ``inv(k2) = A diag(d) A^T``.

    Factors the index-reversed matrix by Cholesky, so the inverse is never
    formed explicitly.
    """
    k2 = np.asarray(k2, dtype=float)
    n = k2.shape[0]
    try:
        c = np.linalg.cholesky(k2[::-1, ::-1])
    except np.linalg.LinAlgError as exc:
        raise SingularHessian("K'' is not positive definite") from exc
    u = sla.solve_triangular(c, np.eye(n), lower=True).T
    lq = u[::-1, ::-1]
    diag = np.diag(lq).copy()
    return lq / diag, diag * diag


def ldl_of_inverse(k2):
    """Generic version of :func:`ldl_of_inverse_values` accepting duals.

    Derivatives follow from ``Q = A D A^T``: with ``M = A^{-1} dQ A^{-T}``,
    ``dD = diag(M)`` and ``dA = A (strict_lower(M) / d)``.
    """
    tag = _top(k2)
    if not tag:
        return ldl_of_inverse_values(k2)
    a0, d0 = ldl_of_inverse(k2.val)
    q0 = (a0 * d0) @ a0.T
    dq = -(q0 @ k2.der @ q0)
    ainv = inv(a0)
    m = ainv @ dq @ ainv.T
    n = _shape(d0)[0]
    lower = np.tril(np.ones((n, n)), -1)
    da = a0 @ ((m / d0) * lower)
    return Dual(a0, da, tag), Dual(d0, diagonal(m), tag)
