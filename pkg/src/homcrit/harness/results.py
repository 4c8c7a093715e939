"""Result rows, tables and sweeps, with CSV/JSON persistence."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple


def fmt(v):
    """Canonical numeric text: ``%.12e`` for numbers, plain text otherwise."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        if isinstance(v, float) and math.isnan(v):
            return "nan"
        return "%.12e" % v
    return str(v)


def param_string(params: dict) -> str:
    return ";".join(f"{k}={fmt(params[k]) if not isinstance(params[k], str) else params[k]}"
                    for k in sorted(params))


@dataclass(frozen=True)
class ResultRow:
    """One measured quantity against its oracle or bound.

    ``provenance`` names the oracle (``oracle:...``), bound (``bound:...``)
    or baseline (``baseline:...``) the row is judged against.
    """

    experiment: str
    params: str
    quantity: str
    measured: float
    bound: float
    ratio: float
    passed: bool
    provenance: str

    HEADER = ("experiment", "params", "quantity", "measured", "bound", "ratio", "pass", "provenance")

    def cells(self):
        return (self.experiment, self.params, self.quantity, fmt(float(self.measured)),
                fmt(float(self.bound)), fmt(float(self.ratio)), fmt(bool(self.passed)), self.provenance)


def make_row(experiment, params, quantity, measured, bound, passed, provenance, ratio=None):
    measured = float(measured)
    bound = float(bound)
    if ratio is None:
        ratio = measured / bound if bound not in (0.0,) and not math.isnan(bound) else float("nan")
    return ResultRow(experiment, param_string(params), quantity, measured, bound, float(ratio),
                     bool(passed), provenance)


@dataclass
class Table:
    name: str
    header: Tuple[str, ...]
    rows: List[tuple]


@dataclass
class Sweep:
    """Data for one SVG plot; ``slopes`` maps series label to fitted slope."""

    name: str
    xlabel: str
    ylabel: str
    series: List[Tuple[str, List[float], List[float]]]
    loglog: bool = False
    slopes: Dict[str, float] = field(default_factory=dict)


@dataclass
class ResultSet:
    experiment: str
    rows: List[ResultRow] = field(default_factory=list)
    tables: List[Table] = field(default_factory=list)
    sweeps: List[Sweep] = field(default_factory=list)
    constants: Dict[str, float] = field(default_factory=dict)
    config: Optional[dict] = None
    runtime: float = 0.0

    @property
    def passed(self):
        return all(r.passed for r in self.rows)

    @property
    def exit_status(self):
        return 0 if self.passed else 1

    def sort(self):
        self.rows.sort(key=lambda r: (r.quantity, r.params))
        self.tables.sort(key=lambda t: t.name)
        self.sweeps.sort(key=lambda s: s.name)

    def rows_for(self, quantity):
        return [r for r in self.rows if r.quantity == quantity]

    def to_json(self):
        d = {
            "experiment": self.experiment,
            "rows": [asdict(r) for r in self.rows],
            "tables": [{"name": t.name, "header": list(t.header), "rows": [list(r) for r in t.rows]}
                       for t in self.tables],
            "sweeps": [asdict(s) for s in self.sweeps],
            "constants": self.constants,
            "config": self.config,
            "runtime": self.runtime,
        }
        return json.dumps(d, indent=1, sort_keys=True, default=float)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        rs = cls(d["experiment"])
        rs.rows = [ResultRow(**r) for r in d["rows"]]
        rs.tables = [Table(t["name"], tuple(t["header"]), [tuple(r) for r in t["rows"]]) for t in d["tables"]]
        rs.sweeps = [Sweep(s["name"], s["xlabel"], s["ylabel"],
                           [(a, list(b), list(c)) for a, b, c in s["series"]], s["loglog"], s["slopes"])
                     for s in d["sweeps"]]
        rs.constants = d["constants"]
        rs.config = d["config"]
        rs.runtime = d.get("runtime", 0.0)
        return rs


def write_csv(path, header, rows):
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(fmt(v) for v in r) + "\n")
