"""Capture-recapture with misidentification.

Each of N animals has, on every occasion j, a chance p_j of being caught.  A
catch is identified correctly with probability alpha; otherwise it produces
a "ghost", a new identity seen only on that occasion.  Observed data are the
counts of non-empty binary capture histories.  Ghosts for occasion j are
pooled into the single-capture history ``e_j``.

Latent histories are counted by a multinomial over ``3**T`` outcome
sequences, and the observed counts are ``x = A y`` for a fixed 0/1 matrix A.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from ..cgf import LinearMap, ModelSpec, MtAlphaCells, Multinomial, Select, Stack, latent_histories
from ..errors import ConfigError, DomainError, OracleTooLarge, TooManyOccasions

MIN_OCCASIONS = 2
MAX_OCCASIONS = 6
ORACLE_MAX_OCCASIONS = 3
ORACLE_MAX_SOLUTIONS = 2_000_000


@dataclass(frozen=True, eq=False)
class MtAlphaDesign:
    occasions: int
    latent: np.ndarray     # (3**T, T), row 0 is never caught
    observed: np.ndarray   # (2**T - 1, T) binary, all-zero history excluded
    A: np.ndarray          # (2**T - 1, 3**T)
    cells: MtAlphaCells

    @property
    def n_params(self):
        return 2 + self.occasions

    def cell_probabilities(self, theta):
        return np.asarray(self.cells(np.asarray(theta, dtype=float)), dtype=float)

    def history_labels(self):
        return ["".join(str(v) for v in row) for row in self.observed]


def split_matrix(occasions):
    latent = latent_histories(occasions)
    observed = np.array(list(itertools.product((0, 1), repeat=occasions))[1:], dtype=int)
    index = {tuple(row): i for i, row in enumerate(observed)}
    a = np.zeros((observed.shape[0], latent.shape[0]))
    for h, row in enumerate(latent):
        ones = tuple(int(v == 1) for v in row)
        if any(ones):
            a[index[ones], h] += 1.0
        for j in np.flatnonzero(row == 2):
            e = [0] * occasions
            e[j] = 1
            a[index[tuple(e)], h] += 1.0
    return latent, observed, a


def build_mtalpha(occasions):
    """Node and design for theta = (N, alpha, p_1, ..., p_T)."""
    occasions = int(occasions)
    if not MIN_OCCASIONS <= occasions <= MAX_OCCASIONS:
        raise TooManyOccasions(f"occasions must be in [{MIN_OCCASIONS}, {MAX_OCCASIONS}], got {occasions}")
    latent, observed, a = split_matrix(occasions)
    cells = MtAlphaCells(occasions, 1, tuple(range(2, 2 + occasions)))
    node = LinearMap(a, Multinomial(Stack((Select((0,)), cells))))
    return node, MtAlphaDesign(occasions, latent, observed, a, cells)


def mtalpha_spec(occasions, theta0=None):
    node, _ = build_mtalpha(occasions)
    names = ("N", "alpha") + tuple(f"p{j + 1}" for j in range(occasions))
    constraints = ("positive", "unit") + ("unit",) * occasions
    return ModelSpec(node, names, constraints, theta0)


def _check_theta(design, theta):
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.shape[0] != design.n_params:
        raise DomainError(f"theta must have {design.n_params} entries")
    if not theta[0] > 0 or np.any(theta[1:] <= 0) or np.any(theta[1:] >= 1):
        raise DomainError("need N > 0 and alpha, p_j in (0, 1)")
    return theta


def _check_counts(design, x):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != design.observed.shape[0]:
        raise DomainError(f"x must have {design.observed.shape[0]} entries")
    if np.any(x < 0) or np.any(x != np.round(x)):
        raise DomainError("observed counts must be non-negative integers")
    return x.astype(int)


def latent_solutions(design, x, max_solutions=ORACLE_MAX_SOLUTIONS):
    """All non-negative integer latent count vectors y (excluding the never-caught cell) with ``A y = x``."""
    if design.occasions > ORACLE_MAX_OCCASIONS:
        raise OracleTooLarge(f"exhaustive oracle supports at most {ORACLE_MAX_OCCASIONS} occasions")
    x = _check_counts(design, x)
    a = design.A[:, 1:].astype(int)
    h = a.shape[1]
    # branch on histories touching many cells first, so bounds bite early
    order = np.argsort(-a.sum(axis=0), kind="stable")
    cols = a[:, order]
    out = []
    y = np.zeros(h, dtype=int)

    def rec(pos, rem):
        if pos == h:
            if not rem.any():
                if len(out) >= max_solutions:
                    raise OracleTooLarge("too many latent configurations for exhaustive enumeration")
                out.append(y.copy())
            return
        col = cols[:, pos]
        touched = col > 0
        bound = int(rem[touched].min()) if touched.any() else 0
        # the remaining columns must be able to absorb what is left
        for c in range(bound, -1, -1):
            y[pos] = c
            rem2 = rem - c * col
            if pos + 1 < h:
                rest = cols[:, pos + 1:].any(axis=1)
                if np.any((rem2 > 0) & ~rest):
                    continue
            rec(pos + 1, rem2)
        y[pos] = 0

    rec(0, x.copy())
    sols = np.zeros((len(out), h), dtype=int)
    if out:
        sols[:, order] = np.array(out)
    return sols


class MtAlphaOracle:
    """Exact log-likelihood by summing over latent configurations, cached per dataset.

    N is treated as a continuous size: the multinomial coefficient uses
    log-gamma, and configurations with more captured animals than N allows
    (``N - s + 1 <= 0``) contribute nothing.
    """

    def __init__(self, design, x):
        self.design = design
        self.x = _check_counts(design, x)
        self.y = latent_solutions(design, self.x)
        self.captured = self.y.sum(axis=1)
        self.log_fact = gammaln(self.y + 1.0).sum(axis=1)

    def loglik(self, theta):
        theta = _check_theta(self.design, theta)
        if self.y.shape[0] == 0:
            return -np.inf
        n = theta[0]
        pi = self.design.cell_probabilities(theta)
        rest = n - self.captured
        ok = rest + 1.0 > 0
        if not ok.any():
            return -np.inf
        with np.errstate(divide="ignore"):
            logpi = np.log(pi)
        y = self.y[ok]
        cell_term = np.where(y > 0, y * logpi[1:], 0.0).sum(axis=1)
        terms = (gammaln(n + 1.0) - gammaln(rest[ok] + 1.0) - self.log_fact[ok]
                 + rest[ok] * logpi[0] + cell_term)
        return float(logsumexp(terms))


def mtalpha_true_loglik_oracle(design, x, theta):
    return MtAlphaOracle(design, x).loglik(theta)


def simulate_mtalpha(design, theta, seed):
    """Observed counts from N latent histories drawn i.i.d. from the cell probabilities."""
    theta = _check_theta(design, theta)
    n = theta[0]
    if n != round(n):
        raise ConfigError("simulation needs an integer population size")
    rng = np.random.default_rng(seed)
    y = rng.multinomial(int(round(n)), design.cell_probabilities(theta))
    return design.A @ y


def mtalpha_moment_start(design, x):
    """Crude starting values: alpha = 0.9, p from single-occasion capture totals, N from a Lincoln-style ratio."""
    x = np.asarray(x, dtype=float)
    per_occ = design.observed.T @ x
    total = x.sum()
    alpha = 0.9
    if design.occasions >= 2 and per_occ[0] > 0 and per_occ[1] > 0:
        both = x[(design.observed[:, 0] == 1) & (design.observed[:, 1] == 1)].sum()
        n = per_occ[0] * per_occ[1] / max(both / alpha**2, 1.0)
    else:
        n = total
    n = max(n, 1.1 * total, 1.0)
    p = np.clip(per_occ / n, 0.05, 0.95)
    return np.concatenate([[n, alpha], p])
