"""Linear birth-death population trajectories observed at unit time steps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cgf import BirthDeathOffspring, Concat, IidSum, ModelSpec, Select
from ..errors import ConfigError


@dataclass(frozen=True, eq=False)
class TrajectoryModel:
    """Counts ``z_0, ..., z_k`` at consecutive unit times."""

    counts: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.counts, dtype=float).reshape(-1)
        if z.shape[0] < 2:
            raise ConfigError("a trajectory needs at least two counts")
        if np.any(z < 1) or np.any(z != np.round(z)):
            raise ConfigError("trajectory counts must be positive integers")
        object.__setattr__(self, "counts", z)

    @property
    def steps(self):
        return self.counts.shape[0] - 1

    @property
    def observation(self):
        return self.counts[1:].copy()


def build_birth_death(trajectory: TrajectoryModel):
    """Given ``z_{j-1}``, ``Z_j`` is a sum of ``z_{j-1}`` offspring variables; theta = (lambda, mu)."""
    child = BirthDeathOffspring(Select((0, 1)))
    return Concat(tuple(IidSum(z, child) for z in trajectory.counts[:-1]))


def birth_death_spec(trajectory, theta0=None):
    return ModelSpec(build_birth_death(trajectory), ("lambda", "mu"), ("positive", "positive"), theta0)


def birth_death_moment_start(trajectory: TrajectoryModel):
    """Starting values from the mean growth rate and the variance of log-ratios."""
    z = trajectory.counts
    r = float(np.log(np.sum(z[1:]) / np.sum(z[:-1])))
    # var(Z_1 | z_0 = 1) = (lambda + mu) / (lambda - mu) * e^r (e^r - 1)
    resid = (z[1:] - z[:-1] * np.exp(r)) ** 2 / z[:-1]
    v = float(np.mean(resid))
    if abs(r) > 1e-8 and np.exp(r) * np.expm1(r) != 0:
        s = v * r / (np.exp(r) * np.expm1(r))
    else:
        s = v
    s = max(s, abs(r) + 1e-3, 1e-3)
    lam = max(0.5 * (s + r), 1e-3)
    mu = max(0.5 * (s - r), 1e-3)
    return np.array([lam, mu])
