"""CSV writers with a fixed number format, so equal inputs give equal bytes."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .calibration import date_of
from .core import distancing_series, effective_R_series, output_series
from .dynamics import Trajectory
from .errors import DataError

TRAJECTORY_COLUMNS = ("date", "lambda", "tau", "alpha_mean", "S", "I", "IT", "R", "RT", "H", "D", "Y", "R_eff")


def fmt(x) -> str:
    if isinstance(x, (str, bool)) or x is None:
        return str(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _write(path, header, rows):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([fmt(v) for v in r])
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc
    return path


def trajectory_table(traj: Trajectory) -> dict:
    """Per-date columns for dates 1..T as numpy arrays (plus ISO dates)."""
    T = traj.horizon
    g = traj.grid
    pol = traj.policy
    S, I, R = g.totals()
    return {
        "date": [date_of(t).isoformat() for t in range(1, T + 1)],
        "lambda": pol.lam,
        "tau": pol.tau,
        "alpha_mean": 1.0 - distancing_series(g, pol.alpha),
        "S": S[:T], "I": I[:T], "IT": g.IT[:T], "R": R[:T], "RT": g.RT[:T], "H": g.H[:T], "D": g.D[:T],
        "Y": output_series(g, pol.lam),
        "R_eff": effective_R_series(g, pol, traj.params),
    }


def write_trajectory(path, traj: Trajectory):
    tab = trajectory_table(traj)
    rows = zip(*(tab[c] for c in TRAJECTORY_COLUMNS))
    return _write(path, TRAJECTORY_COLUMNS, rows)


def write_summary(path, summary: dict):
    return _write(path, ("key", "value"), sorted(summary.items()))


def write_frontier(path, frontier):
    rows = [(p.xi, p.npv_output, p.survivors, p.deaths, p.converged) for p in frontier.points]
    return _write(path, ("xi", "npv_output", "survivors", "deaths", "converged"), rows)


def write_table(path, header, rows):
    return _write(path, header, rows)


def write_json(path, obj):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=float) + "\n")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc
    return path


def read_header(path) -> list:
    with Path(path).open(newline="") as fh:
        return next(csv.reader(fh))


def read_columns(path) -> dict:
    """Numeric columns of a CSV written by this module (non-numeric kept as text)."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = {}
    for k in rows[0] if rows else []:
        vals = [r[k] for r in rows]
        try:
            out[k] = np.array([float(v) for v in vals])
        except ValueError:
            out[k] = vals
    return out
