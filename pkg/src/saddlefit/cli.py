"""``saddlefit`` command-line front end.

Every command writes its result to ``--output`` (stdout by default).  On a
fatal error a one-line JSON record ``{"error": code, "message": ...}`` goes
to stderr and the exit status is non-zero.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import asymptotics as asym
from .cgf import load_model
from .discrepancy import discrepancy_report, true_discrepancy
from .errors import ConfigError, SaddlefitError
from .mle import CONVERGED, find_spa_mle, find_true_mle, transforms_for
from .models import (TrajectoryModel, birth_death_moment_start, birth_death_spec, build_gamma_fixed_rate,
                     build_mtalpha, mtalpha_spec, read_observation_csv, read_trajectory, simulate_mtalpha,
                     true_loglik_gamma, true_loglik_gamma_grad)
from .models.mtalpha import MtAlphaOracle

EXIT_CONFIG = 2
EXIT_NUMERIC = 1


# -- serialization -------------------------------------------------------------
def _num(v):
    return format(float(v), ".17g")


class Rounded(float):
    """A float already rounded for display; serialized by its shortest repr."""


def _encode(obj):
    """JSON text with every float written to 17 significant digits; non-finite floats become null."""
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_encode(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(bool(obj) if obj is not None else None)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, Rounded):
        return repr(float(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(obj) if math.isfinite(obj) else "null"
    return json.dumps(obj)


def dumps(obj):
    return _encode(obj) + "\n"


def sig4(v):
    return Rounded(f"{float(v):.4g}")


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_num(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _emit(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    try:
        d = os.path.dirname(os.path.abspath(path))
        os.makedirs(d, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from exc


# -- shared pieces -------------------------------------------------------------
def _theta0(spec, given, fallback=None):
    if given is not None:
        th = np.asarray(given, dtype=float)
    elif spec.theta0 is not None:
        th = spec.theta0
    elif fallback is not None:
        th = np.asarray(fallback, dtype=float)
    else:
        raise ConfigError("no starting point: pass --theta0 or put theta0 in the model file")
    if th.shape[0] != spec.n_params:
        raise ConfigError(f"theta0 has {th.shape[0]} entries but the model has {spec.n_params} parameters")
    return th


def _fit_payload(spec, x, theta0, args):
    fit = find_spa_mle(spec.node, x, theta0, transforms_for(spec.constraints), objective=args.objective,
                       tol=args.tol, max_iter=args.max_iter)
    out = {"names": list(spec.names), "fit": fit.to_dict()}
    if fit.status != CONVERGED:
        out["error"] = f"fit_{fit.status}"
        return out, fit, None
    report = discrepancy_report(spec.node, fit.theta_hat, x)
    out["discrepancy"] = report.to_dict()
    out["corrected"] = (fit.theta_hat + report.delta_hat).tolist()
    return out, fit, report


def _fit_csv(spec, fit, report):
    rows = []
    for i, nm in enumerate(spec.names):
        d = report.delta_hat[i] if report is not None else float("nan")
        rows.append([nm, fit.theta_hat[i], fit.standard_errors[i], d, fit.theta_hat[i] + d])
    return _csv_text(["name", "theta_spa", "se", "delta_hat", "corrected"], rows)


def _finish_fit(spec, x, theta0, args):
    payload, fit, report = _fit_payload(spec, x, theta0, args)
    if args.format == "csv":
        _emit(_fit_csv(spec, fit, report), args.output)
    else:
        _emit(dumps(payload), args.output)
    return 0 if "error" not in payload else EXIT_NUMERIC


# -- commands ------------------------------------------------------------------
def cmd_fit(args):
    spec = load_model(args.model)
    _, x = read_observation_csv(args.data)
    return _finish_fit(spec, x, _theta0(spec, args.theta0), args)


def cmd_discrepancy(args):
    spec = load_model(args.model)
    _, x = read_observation_csv(args.data)
    theta = _theta0(spec, args.theta)
    report = discrepancy_report(spec.node, theta, x)
    if args.format == "csv":
        rows = [[nm, theta[i], report.delta_hat[i], report.standard_errors[i], report.ratio[i]]
                for i, nm in enumerate(spec.names)]
        _emit(_csv_text(["name", "theta", "delta_hat", "se", "ratio"], rows), args.output)
    else:
        _emit(dumps({"names": list(spec.names), "theta": theta.tolist(), **report.to_dict()}), args.output)
    return 0


def gamma_demo(x, n=1.0, alpha0=1.0):
    """Saddlepoint and exact fits of the fixed-rate gamma model at one observation."""
    if not x > 0:
        raise ConfigError("--x must be positive")
    obs = np.array([float(x)])
    node = build_gamma_fixed_rate(n)
    spa = find_spa_mle(node, obs, [alpha0], ("log",))
    true = find_true_mle(lambda a, xx: true_loglik_gamma(a, xx, n), obs, spa.theta_hat, ("log",),
                         grad=lambda a, xx: true_loglik_gamma_grad(a, xx, n))
    if not (spa.converged and true.converged):
        raise SaddlefitError(f"gamma fits did not converge ({spa.status}, {true.status})")
    report = discrepancy_report(node, spa.theta_hat, obs)
    values = {
        "alpha_spa": float(spa.theta_hat[0]),
        "alpha_true": float(true.theta_hat[0]),
        "delta": float(true_discrepancy(true.theta_hat, spa.theta_hat)[0]),
        "delta_hat": float(report.delta_hat[0]),
    }
    return {"x": float(x), "n": float(n), **values, "summary": {k: sig4(v) for k, v in values.items()}}


def cmd_gamma_demo(args):
    out = gamma_demo(args.x, args.n)
    if args.format == "csv":
        keys = ("alpha_spa", "alpha_true", "delta", "delta_hat")
        _emit(_csv_text(["x", "n", *keys], [[out["x"], out["n"], *(out[k] for k in keys)]]), args.output)
    else:
        _emit(dumps(out), args.output)
    return 0


def _grid(args):
    if not 0 < args.n_min < args.n_max or args.points < 2:
        raise ConfigError("need 0 < --n-min < --n-max and --points >= 2")
    return tuple(np.logspace(np.log10(args.n_min), np.log10(args.n_max), args.points))


def _sweep_out(records, names, args):
    summary = dumps(asym.slope_summary(records, names, args.burn_in))
    if args.summary:
        _emit(summary, args.summary)
    if args.format == "json":
        _emit(summary, args.output)
    else:
        _emit(asym.records_csv(records, names), args.output)
    return 0


def cmd_theorem1(args):
    records = asym.sweep_theorem1(args.u0, _grid(args))
    return _sweep_out(records, ["alpha"], args)


def cmd_theorem3(args):
    omega0 = np.asarray(args.omega0, dtype=float)
    k = omega0.shape[0]
    z0 = asym.theorem3_z0(omega0, args.tau0, args.m, args.seed)
    records = asym.sweep_theorem3(omega0, args.tau0, k, args.m, z0, _grid(args))
    return _sweep_out(records, [f"omega{i + 1}" for i in range(k)] + ["tau"], args)


def mtalpha_replicate(spec, design, theta, seed, oracle):
    """Simulate one dataset, fit the saddlepoint MLE and optionally the enumeration oracle."""
    x = simulate_mtalpha(design, theta, seed)
    tr = transforms_for(spec.constraints)
    row = {"seed": seed, "x": x.tolist()}
    p = theta.shape[0]
    try:
        spa = find_spa_mle(spec.node, x, theta, tr)
        row["theta_spa"] = spa.theta_hat.tolist()
        row["status_spa"] = spa.status
        row["delta_hat"] = (discrepancy_report(spec.node, spa.theta_hat, x).delta_hat.tolist()
                            if spa.converged else [float("nan")] * p)
        if oracle:
            orc = MtAlphaOracle(design, x)
            true = find_true_mle(lambda th, xx: orc.loglik(th), x, theta, tr)
            row["theta_oracle"] = true.theta_hat.tolist()
            row["status_oracle"] = true.status
        if not spa.converged:
            row["error"] = f"spa_{spa.status}"
        elif oracle and row["status_oracle"] != CONVERGED:
            row["error"] = f"oracle_{row['status_oracle']}"
    except SaddlefitError as exc:
        row["error"] = exc.code
    return row


def cmd_mtalpha_sim(args):
    spec = mtalpha_spec(args.occasions)
    _, design = build_mtalpha(args.occasions)
    theta = np.asarray(args.theta, dtype=float)
    if theta.shape[0] != spec.n_params:
        raise ConfigError(f"--theta needs {spec.n_params} values (N, alpha, p_1..p_T)")
    seeds = [args.seed + r for r in range(args.replicates)]
    workers = asym._workers()

    def one(s):
        return mtalpha_replicate(spec, design, theta, s, args.oracle)

    if workers == 1:
        rows = [one(s) for s in seeds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, seeds))
    if args.format == "json":
        _emit(dumps({"names": list(spec.names), "theta": theta.tolist(), "replicates": rows}), args.output)
    else:
        header = ["seed"]
        fields = ["theta_spa", "delta_hat"] + (["theta_oracle"] if args.oracle else [])
        for f in fields:
            header += [f"{f}_{nm}" for nm in spec.names]
        header.append("error")
        out = []
        nan = [float("nan")] * spec.n_params
        for r in rows:
            line = [r["seed"]]
            for f in fields:
                line += [float(v) for v in r.get(f, nan)]
            line.append(r.get("error", ""))
            out.append(line)
        _emit(_csv_text(header, out), args.output)
    return 0


def cmd_birth_death_fit(args):
    _, counts = read_trajectory(args.data)
    traj = TrajectoryModel(counts)
    spec = birth_death_spec(traj)
    theta0 = _theta0(spec, args.theta0, birth_death_moment_start(traj))
    return _finish_fit(spec, traj.observation, theta0, args)


# -- parser --------------------------------------------------------------------
def _add_output(p, default_format="json"):
    p.add_argument("--output", "-o", default=None, help="output file (default: stdout)")
    p.add_argument("--format", choices=("json", "csv"), default=default_format)


def _add_optimizer(p):
    p.add_argument("--objective", choices=("spa", "spa2"), default="spa")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=500)


def _add_grid(p):
    p.add_argument("--n-min", type=float, default=10.0)
    p.add_argument("--n-max", type=float, default=1e4)
    p.add_argument("--points", type=int, default=16)
    p.add_argument("--burn-in", type=int, default=asym.DEFAULT_BURN_IN)
    p.add_argument("--summary", default=None, help="also write the JSON slope summary here")


def build_parser():
    parser = argparse.ArgumentParser(prog="saddlefit", description="Saddlepoint MLEs and their discrepancies.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="saddlepoint MLE plus approximated discrepancy")
    p.add_argument("--model", required=True, help="model spec JSON")
    p.add_argument("--data", required=True, help="observation CSV (name,value)")
    p.add_argument("--theta0", type=float, nargs="+")
    _add_optimizer(p)
    _add_output(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("discrepancy", help="approximated discrepancy at a given theta")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--theta", type=float, nargs="+")
    _add_output(p)
    p.set_defaults(func=cmd_discrepancy)

    p = sub.add_parser("gamma-demo", help="fixed-rate gamma worked example")
    p.add_argument("--x", type=float, default=1.58177)
    p.add_argument("--n", type=float, default=1.0)
    _add_output(p)
    p.set_defaults(func=cmd_gamma_demo)

    p = sub.add_parser("theorem1", help="scalar gamma sample-size sweep")
    p.add_argument("--u0", type=float, default=asym.THEOREM1_U0)
    _add_grid(p)
    _add_output(p, "csv")
    p.set_defaults(func=cmd_theorem1)

    p = sub.add_parser("theorem3", help="multivariate gamma sample-size sweep")
    p.add_argument("--omega0", type=float, nargs="+", default=list(asym.THEOREM3_OMEGA0))
    p.add_argument("--tau0", type=float, default=asym.THEOREM3_TAU0)
    p.add_argument("--m", type=int, default=asym.THEOREM3_M)
    p.add_argument("--seed", type=int, default=asym.THEOREM3_SEED)
    _add_grid(p)
    _add_output(p, "csv")
    p.set_defaults(func=cmd_theorem3)

    p = sub.add_parser("mtalpha-sim", help="simulate and fit the capture-recapture model")
    p.add_argument("--occasions", type=int, default=2)
    p.add_argument("--theta", type=float, nargs="+", required=True, help="N alpha p_1 .. p_T")
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--oracle", action="store_true", help="also fit the enumeration likelihood")
    _add_output(p, "csv")
    p.set_defaults(func=cmd_mtalpha_sim)

    p = sub.add_parser("birth-death-fit", help="fit a linear birth-death model to a yearly count series")
    p.add_argument("--data", required=True, help="trajectory CSV (year,count)")
    p.add_argument("--theta0", type=float, nargs=2)
    _add_optimizer(p)
    _add_output(p)
    p.set_defaults(func=cmd_birth_death_fit)
    return parser


def _error(code, message):
    sys.stderr.write(json.dumps({"error": code, "message": message}) + "\n")


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _error(exc.code, str(exc))
        return EXIT_CONFIG
    except SaddlefitError as exc:
        _error(exc.code, str(exc))
        return EXIT_NUMERIC
    except OSError as exc:
        _error("io_error", str(exc))
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
