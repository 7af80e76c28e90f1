"""Maps from the global parameter vector to node-local parameters.

Adapters are small immutable callables.  They must stay generic over
:class:`~saddlefit.dual.Dual` inputs, so they only use indexing, arithmetic and
numpy ufuncs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .. import dual as ad
from ..errors import ConfigError


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class Adapter:
    kind = "adapter"

    def __call__(self, theta):
        raise NotImplementedError

    @property
    def size(self) -> int:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Select(Adapter):
    """Pick entries of theta by index."""

    indices: tuple

    kind = "select"

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))

    def __call__(self, theta):
        return theta[np.array(self.indices)]

    @property
    def size(self):
        return len(self.indices)

    def to_dict(self):
        return {"kind": self.kind, "indices": list(self.indices)}


@dataclass(frozen=True, eq=False)
class Fixed(Adapter):
    """Constant local parameters that do not depend on theta."""

    values: np.ndarray

    kind = "fixed"

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(np.atleast_1d(self.values)))

    def __call__(self, theta):
        return self.values

    @property
    def size(self):
        return self.values.shape[0]

    def to_dict(self):
        return {"kind": self.kind, "values": self.values.tolist()}


@dataclass(frozen=True, eq=False)
class Affine(Adapter):
    """``matrix @ inner(theta) + offset``."""

    of: Adapter
    matrix: np.ndarray
    offset: np.ndarray

    kind = "affine"

    def __post_init__(self):
        m = _frozen(np.atleast_2d(self.matrix))
        off = _frozen(np.atleast_1d(self.offset))
        if m.shape[1] != self.of.size or off.shape[0] != m.shape[0]:
            raise ConfigError("affine adapter shapes do not match")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "offset", off)

    def __call__(self, theta):
        return self.matrix @ self.of(theta) + self.offset

    @property
    def size(self):
        return self.matrix.shape[0]

    def to_dict(self):
        return {
            "kind": self.kind,
            "of": self.of.to_dict(),
            "matrix": self.matrix.tolist(),
            "offset": self.offset.tolist(),
        }


@dataclass(frozen=True, eq=False)
class Exp(Adapter):
    of: Adapter

    kind = "exp"

    def __call__(self, theta):
        return np.exp(self.of(theta))

    @property
    def size(self):
        return self.of.size

    def to_dict(self):
        return {"kind": self.kind, "of": self.of.to_dict()}


@dataclass(frozen=True, eq=False)
class Logistic(Adapter):
    """Inverse logit, mapping the real line onto (0, 1)."""

    of: Adapter

    kind = "logistic"

    def __call__(self, theta):
        return 1.0 / (1.0 + np.exp(-self.of(theta)))

    @property
    def size(self):
        return self.of.size

    def to_dict(self):
        return {"kind": self.kind, "of": self.of.to_dict()}


@dataclass(frozen=True, eq=False)
class Stack(Adapter):
    """Concatenate the outputs of several adapters."""

    parts: tuple

    kind = "stack"

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))

    def __call__(self, theta):
        return ad.concatenate([p(theta) for p in self.parts])

    @property
    def size(self):
        return sum(p.size for p in self.parts)

    def to_dict(self):
        return {"kind": self.kind, "parts": [p.to_dict() for p in self.parts]}


def latent_histories(occasions: int) -> np.ndarray:
    """All outcome sequences over {0: missed, 1: caught and identified, 2: caught and misidentified}.

    Row 0 is the all-missed history.
    """
    return np.array(list(itertools.product(range(3), repeat=occasions)), dtype=int)


@dataclass(frozen=True, eq=False)
class MtAlphaCells(Adapter):
    """Latent-history cell probabilities of the misidentification model.

    On occasion ``j`` an animal is caught with probability ``p_j`` and, when
    caught, identified correctly with probability ``alpha``; occasions are
    independent.
    """

    occasions: int
    alpha_index: int
    p_indices: tuple

    kind = "mtalpha_cells"

    def __post_init__(self):
        object.__setattr__(self, "p_indices", tuple(int(i) for i in self.p_indices))
        if len(self.p_indices) != self.occasions:
            raise ConfigError("need one capture probability per occasion")

    def __call__(self, theta):
        alpha = theta[self.alpha_index]
        hist = latent_histories(self.occasions)
        prob = None
        for j, pi in enumerate(self.p_indices):
            p = theta[pi]
            factors = ad.stack([1.0 - p, p * alpha, p * (1.0 - alpha)])
            f = factors[hist[:, j]]
            prob = f if prob is None else prob * f
        return prob

    @property
    def size(self):
        return 3**self.occasions

    def to_dict(self):
        return {
            "kind": self.kind,
            "occasions": self.occasions,
            "alpha_index": self.alpha_index,
            "p_indices": list(self.p_indices),
        }


def adapter_from_dict(doc: dict) -> Adapter:
    try:
        kind = doc["kind"]
        if kind == "select":
            return Select(doc["indices"])
        if kind == "fixed":
            return Fixed(doc["values"])
        if kind == "affine":
            return Affine(adapter_from_dict(doc["of"]), doc["matrix"], doc["offset"])
        if kind == "exp":
            return Exp(adapter_from_dict(doc["of"]))
        if kind == "logistic":
            return Logistic(adapter_from_dict(doc["of"]))
        if kind == "stack":
            return Stack(tuple(adapter_from_dict(p) for p in doc["parts"]))
        if kind == "mtalpha_cells":
            return MtAlphaCells(doc["occasions"], doc["alpha_index"], doc["p_indices"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed parameter adapter record: {doc!r}") from exc
    raise ConfigError(f"unknown parameter adapter kind {kind!r}")


def as_adapter(spec) -> Adapter:
    """Accept an adapter, a list of indices, or a serialized record."""
    if isinstance(spec, Adapter):
        return spec
    if isinstance(spec, dict):
        return adapter_from_dict(spec)
    return Select(tuple(spec))
