"""Write a ResultSet to disk: CSV tables, SVG plots, summary, JSON."""
from __future__ import annotations

import os
import re

from ..errors import ValidationError
from .results import ResultRow, ResultSet, fmt, write_csv
from .svg import line_plot


def _slug(name):
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name).strip("_") or "sweep"


def emit_report(rs: ResultSet, out_dir) -> dict:
    """Write every artifact of ``rs`` under ``out_dir/<experiment>/``.

    Returns a mapping from artifact kind to the list of written paths.
    """
    d = os.path.join(out_dir, rs.experiment)
    try:
        os.makedirs(d, exist_ok=True)
    except OSError as exc:
        raise ValidationError(f"cannot create output directory {d!r}: {exc}") from None
    if not os.access(d, os.W_OK):
        raise ValidationError(f"output directory {d!r} is not writable")
    rs.sort()
    written = {"csv": [], "svg": [], "summary": [], "json": []}
    p = os.path.join(d, "results.csv")
    with open(p, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(",".join(ResultRow.HEADER) + "\n")
        for r in rs.rows:
            fh.write(",".join(r.cells()) + "\n")
    written["csv"].append(p)
    for t in rs.tables:
        p = os.path.join(d, _slug(t.name) + ".csv")
        write_csv(p, t.header, t.rows)
        written["csv"].append(p)
    for s in rs.sweeps:
        p = os.path.join(d, _slug(s.name) + ".svg")
        with open(p, "w", newline="\n", encoding="utf-8") as fh:
            fh.write(line_plot(s))
        written["svg"].append(p)
    p = os.path.join(d, "summary.txt")
    with open(p, "w", newline="\n", encoding="utf-8") as fh:
        n_fail = sum(not r.passed for r in rs.rows)
        fh.write(f"experiment: {rs.experiment}\n")
        fh.write(f"rows: {len(rs.rows)}\n")
        fh.write(f"failed: {n_fail}\n")
        fh.write(f"status: {'pass' if n_fail == 0 else 'FAIL'}\n")
        fh.write(f"runtime_s: {rs.runtime:.1f}\n")
        fh.write("fitted constants:\n")
        for k in sorted(rs.constants):
            fh.write(f"  {k} = {fmt(float(rs.constants[k]))}\n")
        for s in rs.sweeps:
            for lab in sorted(s.slopes):
                fh.write(f"  slope[{s.name}/{lab}] = {fmt(float(s.slopes[lab]))}\n")
        if n_fail:
            fh.write("failures:\n")
            for r in rs.rows:
                if not r.passed:
                    fh.write(f"  {r.quantity} [{r.params}] measured={fmt(r.measured)} bound={fmt(r.bound)}\n")
    written["summary"].append(p)
    p = os.path.join(d, "results.json")
    with open(p, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(rs.to_json())
        fh.write("\n")
    written["json"].append(p)
    return written


def load_results(path) -> ResultSet:
    """Load ``results.json`` from a file or an experiment directory."""
    if os.path.isdir(path):
        path = os.path.join(path, "results.json")
    with open(path, encoding="utf-8") as fh:
        return ResultSet.from_json(fh.read())
