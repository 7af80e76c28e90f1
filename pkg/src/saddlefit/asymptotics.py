"""Sample-size sweeps comparing true and approximated discrepancies.

Each sweep fits the exact and the saddlepoint MLE on a deterministic
observation sequence ``x_n`` and records the true discrepancy
``delta = theta_true - theta_spa`` next to the approximation ``delta_hat``.
Rates are then read off log-log least-squares fits.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .discrepancy import discrepancy_report, true_discrepancy
from .errors import InsufficientPoints, SaddlefitError
from .mle import CONVERGED, find_spa_mle, find_true_mle
from .models.gamma import (build_gamma_fixed_rate, build_mvgamma, true_loglik_gamma,
                           true_loglik_gamma_grad, true_loglik_mvgamma, true_loglik_mvgamma_grad)

DEFAULT_GRID = tuple(np.logspace(1, 4, 16))
DEFAULT_BURN_IN = 3
THEOREM1_U0 = 1.3045
THEOREM3_OMEGA0 = (1.5, 3.6, 5.8)
THEOREM3_TAU0 = 1.0
THEOREM3_K = 3
THEOREM3_M = 5
THEOREM3_SEED = 20240
THREADS_ENV = "SADDLEFIT_THREADS"

FIELDS = ("delta", "delta_hat", "diff")


@dataclass(frozen=True, eq=False)
class ExperimentRecord:
    n: float
    delta: np.ndarray
    delta_hat: np.ndarray
    theta_true: np.ndarray = field(default=None)
    theta_spa: np.ndarray = field(default=None)
    error: str | None = None

    @property
    def diff(self):
        return self.delta - self.delta_hat

    @property
    def ok(self):
        return self.error is None

    def value(self, name):
        if name not in FIELDS:
            raise ValueError(f"unknown record field {name!r}")
        return getattr(self, name)


def _failed(n, p, code):
    nan = np.full(p, np.nan)
    return ExperimentRecord(float(n), nan, nan.copy(), nan.copy(), nan.copy(), code)


def _workers():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _run_rows(fn, grid):
    grid = [float(n) for n in grid]
    if np.any(np.diff(grid) <= 0):
        raise ValueError("sweep grid must be strictly increasing")
    workers = _workers()
    if workers == 1:
        return [fn(n) for n in grid]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, grid))


def _record(n, spa, true, node, x, p):
    if spa.status != CONVERGED:
        return _failed(n, p, f"spa_{spa.status}")
    if true.status != CONVERGED:
        return _failed(n, p, f"true_{true.status}")
    report = discrepancy_report(node, spa.theta_hat, x)
    delta = true_discrepancy(true.theta_hat, spa.theta_hat)
    return ExperimentRecord(n, delta, report.delta_hat, true.theta_hat, spa.theta_hat)


# -- scalar gamma sweep ------------------------------------------------------
def theorem1_row(n, u0=THEOREM1_U0):
    x = np.array([n * u0])
    node = build_gamma_fixed_rate(n)
    try:
        spa = find_spa_mle(node, x, [u0], ("log",))
        true = find_true_mle(lambda a, xx: true_loglik_gamma(a, xx, n), x, spa.theta_hat, ("log",),
                             grad=lambda a, xx: true_loglik_gamma_grad(a, xx, n))
        return _record(n, spa, true, node, x, 1)
    except SaddlefitError as exc:
        return _failed(n, 1, exc.code)


def sweep_theorem1(u0=THEOREM1_U0, n_grid=DEFAULT_GRID):
    """Fixed-rate gamma sums at ``x_n = n u0``."""
    if not u0 > 0:
        raise ValueError("u0 must be positive")
    return _run_rows(lambda n: theorem1_row(n, u0), n_grid)


def theorem1_constant(u0=THEOREM1_U0):
    """Limit of ``n^2 delta_hat_n``: ``1 / (12 alpha)`` with ``log u0 = log alpha``, i.e. alpha = u0."""
    return 1.0 / (12.0 * u0)


# -- multivariate gamma block sweep -----------------------------------------
def theorem3_z0(omega0=THEOREM3_OMEGA0, tau0=THEOREM3_TAU0, m=THEOREM3_M, seed=THEOREM3_SEED):
    """One draw of ``X_1 - E X_1`` for the block model, entries ordered block by block."""
    omega0 = np.asarray(omega0, dtype=float)
    rng = np.random.default_rng(seed)
    shape = np.repeat(omega0 * tau0, m)
    return rng.gamma(shape, 1.0 / tau0) - np.repeat(omega0, m)


def theorem3_row(n, omega0, tau0, k, m, z0):
    omega0 = np.asarray(omega0, dtype=float)
    u0 = np.repeat(omega0, m)
    x = n * u0 + np.sqrt(n) * np.asarray(z0, dtype=float)
    node = build_mvgamma(k, m, n)
    theta0 = np.concatenate([omega0, [tau0]])
    p = k + 1
    tr = ("log",) * p
    try:
        spa = find_spa_mle(node, x, theta0, tr)
        true = find_true_mle(lambda th, xx: true_loglik_mvgamma(th, xx, k, m, n), x, spa.theta_hat, tr,
                             grad=lambda th, xx: true_loglik_mvgamma_grad(th, xx, k, m, n))
        return _record(n, spa, true, node, x, p)
    except SaddlefitError as exc:
        return _failed(n, p, exc.code)


def sweep_theorem3(omega0=THEOREM3_OMEGA0, tau0=THEOREM3_TAU0, k=THEOREM3_K, m=THEOREM3_M, z0=None,
                   n_grid=DEFAULT_GRID):
    """Block gamma sums at ``x_n = n u0 + sqrt(n) z0``; parameters ordered (omega_1..omega_k, tau)."""
    omega0 = np.asarray(omega0, dtype=float)
    if omega0.shape[0] != k:
        raise ValueError("omega0 must have k entries")
    if z0 is None:
        z0 = theorem3_z0(omega0, tau0, m)
    z0 = np.asarray(z0, dtype=float)
    if z0.shape[0] != k * m:
        raise ValueError("z0 must have k * m entries")
    return _run_rows(lambda n: theorem3_row(n, omega0, tau0, k, m, z0), n_grid)


# -- slope fitting -------------------------------------------------------------
@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r2: float
    points: int

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2, "points": self.points}


def fit_loglog(n, values):
    n = np.asarray(n, dtype=float)
    v = np.abs(np.asarray(values, dtype=float))
    keep = np.isfinite(v) & (v > 0) & (n > 0)
    if keep.sum() < 4:
        raise InsufficientPoints(f"need at least 4 usable points, have {int(keep.sum())}")
    lx, ly = np.log(n[keep]), np.log(v[keep])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss if ss > 0 else 1.0
    return SlopeFit(float(slope), float(intercept), r2, int(keep.sum()))


def fit_slope(records, field_name, index, burn_in=DEFAULT_BURN_IN):
    """Least-squares line through ``(log n, log |field[index]|)`` after dropping ``burn_in`` rows."""
    rows = [r for r in records[burn_in:] if r.ok]
    n = [r.n for r in rows]
    vals = [r.value(field_name)[index] for r in rows]
    return fit_loglog(n, vals)


def slope_envelope(records, field_name, index, burn_in=DEFAULT_BURN_IN):
    """Range of fitted slopes over burn-in values ``burn_in - 1 .. burn_in + 1``."""
    slopes = [fit_slope(records, field_name, index, b).slope
              for b in (max(burn_in - 1, 0), burn_in, burn_in + 1)]
    return min(slopes), max(slopes)


def block_values(records, field_name, indices):
    """Per-record mean of ``|field|`` over a block of parameters."""
    return [float(np.mean(np.abs(r.value(field_name)[list(indices)]))) for r in records]


def fit_block_slope(records, field_name, indices, burn_in=DEFAULT_BURN_IN):
    rows = [r for r in records[burn_in:] if r.ok]
    return fit_loglog([r.n for r in rows], block_values(rows, field_name, indices))


# -- output --------------------------------------------------------------------
def _fmt(v):
    return format(float(v), ".17g")


def records_csv(records, names):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["n"]
    for f in FIELDS:
        header += [f"abs_{f}_{nm}" for nm in names]
    header.append("error")
    w.writerow(header)
    for r in records:
        row = [_fmt(r.n)]
        for f in FIELDS:
            row += [_fmt(abs(v)) for v in r.value(f)]
        row.append(r.error or "")
        w.writerow(row)
    return buf.getvalue()


def slope_summary(records, names, burn_in=DEFAULT_BURN_IN):
    out = {}
    for i, nm in enumerate(names):
        entry = {}
        for f in FIELDS:
            try:
                fit = fit_slope(records, f, i, burn_in)
                lo, hi = slope_envelope(records, f, i, burn_in)
                entry[f] = dict(fit.to_dict(), envelope=[lo, hi])
            except InsufficientPoints as exc:
                entry[f] = {"error": exc.code}
        out[nm] = entry
    last = next((r for r in reversed(records) if r.ok), None)
    summary = {"burn_in": burn_in, "slopes": out, "failed_rows": sum(not r.ok for r in records)}
    if last is not None:
        summary["ratio_at_largest_n"] = (last.delta_hat / last.delta).tolist()
        summary["largest_n"] = last.n
    return summary


def summary_json(records, names, burn_in=DEFAULT_BURN_IN):
    return json.dumps(slope_summary(records, names, burn_in), indent=2, sort_keys=True)
