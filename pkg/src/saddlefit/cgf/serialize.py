"""JSON model documents.

A model document looks like::

    {"node": {...node tree...},
     "parameters": [{"name": "alpha", "constraint": "positive"}, ...],
     "theta0": [2.0, ...]}

Node records carry a ``kind`` plus their fields; matrices are row-major nested
lists.  Floats go through ``json`` which writes ``repr`` and therefore
round-trips exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from .adapters import adapter_from_dict
from .nodes import (BirthDeathOffspring, CgfNode, Concat, Gamma, IidSum, LinearMap, Multinomial,
                    MultivariateNormal, Poisson, SumIndependent)

CONSTRAINTS = ("real", "positive", "unit")


def node_from_dict(doc: dict) -> CgfNode:
    try:
        kind = doc["kind"]
        if kind == "gamma":
            return Gamma(adapter_from_dict(doc["params"]), doc.get("parameterization", "shape_rate"))
        if kind == "poisson":
            return Poisson(adapter_from_dict(doc["rate"]))
        if kind == "mvn":
            return MultivariateNormal(adapter_from_dict(doc["mean"]), np.array(doc["cov"], dtype=float))
        if kind == "multinomial":
            return Multinomial(adapter_from_dict(doc["params"]))
        if kind == "birth_death":
            return BirthDeathOffspring(adapter_from_dict(doc["params"]))
        if kind == "iid_sum":
            n = doc["n"]
            return IidSum(adapter_from_dict(n) if isinstance(n, dict) else float(n),
                          node_from_dict(doc["child"]))
        if kind == "linear_map":
            return LinearMap(np.array(doc["matrix"], dtype=float), node_from_dict(doc["child"]))
        if kind == "concat":
            return Concat(tuple(node_from_dict(c) for c in doc["children"]))
        if kind == "sum_independent":
            return SumIndependent(tuple(node_from_dict(c) for c in doc["children"]))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed node record: {exc}") from exc
    raise ConfigError(f"unknown node kind {kind!r}")


def node_to_dict(node: CgfNode) -> dict:
    return node.to_dict()


def dumps_node(node: CgfNode) -> str:
    return json.dumps(node.to_dict())


def loads_node(text: str) -> CgfNode:
    return node_from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """A node tree plus named, constrained parameters and a starting point."""

    node: CgfNode
    names: tuple
    constraints: tuple
    theta0: np.ndarray = field(default=None)

    def __post_init__(self):
        names = tuple(self.names)
        constraints = tuple(self.constraints)
        if len(names) != len(constraints):
            raise ConfigError("one constraint per parameter is required")
        bad = [c for c in constraints if c not in CONSTRAINTS]
        if bad:
            raise ConfigError(f"unknown constraints {bad}; expected one of {CONSTRAINTS}")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "constraints", constraints)
        if self.theta0 is not None:
            th = np.array(self.theta0, dtype=float).reshape(-1)
            if th.shape[0] != len(names):
                raise ConfigError(f"theta0 has {th.shape[0]} entries but the model has {len(names)} parameters")
            object.__setattr__(self, "theta0", th)

    @property
    def n_params(self):
        return len(self.names)

    def to_dict(self):
        doc = {
            "node": self.node.to_dict(),
            "parameters": [{"name": n, "constraint": c} for n, c in zip(self.names, self.constraints)],
        }
        if self.theta0 is not None:
            doc["theta0"] = self.theta0.tolist()
        return doc

    @classmethod
    def from_dict(cls, doc):
        try:
            params = doc["parameters"]
            names = [p["name"] for p in params]
            constraints = [p.get("constraint", "real") for p in params]
            node = node_from_dict(doc["node"])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed model document: {exc}") from exc
        return cls(node, names, constraints, doc.get("theta0"))


def load_model(path) -> ModelSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read model file {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"model file {path} is not valid JSON: {exc}") from exc
    return ModelSpec.from_dict(doc)


def save_model(spec: ModelSpec, path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2) + "\n")
