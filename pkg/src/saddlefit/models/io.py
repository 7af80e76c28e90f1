"""Plain-text data formats.

Observation CSV: one ``name,value`` row per component, optional header line
``name,value``.  Trajectory file: ``year,count`` per line, optional header.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..errors import ConfigError


def _rows(path):
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return rows


def _is_header(row):
    try:
        float(row[1])
    except (ValueError, IndexError):
        return True
    return False


def read_observation_csv(path):
    """Returns ``(names, values)``."""
    rows = _rows(path)
    if rows and _is_header(rows[0]):
        rows = rows[1:]
    names, values = [], []
    for i, row in enumerate(rows):
        if len(row) != 2:
            raise ConfigError(f"{path}: row {i + 1} must have two fields, got {len(row)}")
        try:
            values.append(float(row[1]))
        except ValueError as exc:
            raise ConfigError(f"{path}: row {i + 1} has a non-numeric value {row[1]!r}") from exc
        names.append(row[0].strip())
    if not values:
        raise ConfigError(f"{path}: no observations found")
    x = np.array(values)
    if not np.all(np.isfinite(x)):
        raise ConfigError(f"{path}: observations must be finite")
    return names, x


def write_observation_csv(path, values, names=None):
    values = np.asarray(values, dtype=float).reshape(-1)
    if names is None:
        names = [f"x{i + 1}" for i in range(values.shape[0])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "value"])
        for n, v in zip(names, values):
            w.writerow([n, format(float(v), ".17g")])


def read_trajectory(path):
    """Returns ``(years, counts)`` sorted by year."""
    rows = _rows(path)
    if rows and _is_header(rows[0]):
        rows = rows[1:]
    years, counts = [], []
    for i, row in enumerate(rows):
        if len(row) != 2:
            raise ConfigError(f"{path}: row {i + 1} must be year,count")
        try:
            years.append(float(row[0]))
            counts.append(float(row[1]))
        except ValueError as exc:
            raise ConfigError(f"{path}: row {i + 1} is not numeric") from exc
    if len(counts) < 2:
        raise ConfigError(f"{path}: a trajectory needs at least two rows")
    order = np.argsort(years, kind="stable")
    return np.array(years)[order], np.array(counts)[order]


def ensure_parent(path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
