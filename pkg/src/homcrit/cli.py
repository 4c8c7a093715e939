"""Command-line entry point (``homcrit`` / ``python3 -m homcrit``)."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from fractions import Fraction

from .errors import ResolutionError, ValidationError
from .harness import ConfigError, emit_report, load_config, load_results, run_experiment, validate_config

SUITE_COMMANDS = {
    "cell": "cell-convergence",
    "approx": "approx-rate",
    "doubling": "doubling",
    "weiss": "weiss",
    "turning": "turning",
    "twopoint": "two-point",
    "cover": "cover",
    "tube": "tube",
}


def _value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        try:
            return float(Fraction(text))
        except (ValueError, ZeroDivisionError):
            return text


def _common(p):
    p.add_argument("--config", metavar="PATH", help="JSON configuration document")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--jobs", type=int, help="worker processes")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config field (JSON or fraction values), repeatable")


def build_parser():
    ap = argparse.ArgumentParser(prog="homcrit", description="Periodic homogenization and critical-set experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for cmd, exp in SUITE_COMMANDS.items():
        _common(sub.add_parser(cmd, help=f"run the {exp} suite"))
    p = sub.add_parser("solve", help="solve one Dirichlet problem and export the grid solution")
    _common(p)
    p.add_argument("--preset", default="layered")
    p.add_argument("--eps", type=_value, default=1 / 16)
    p.add_argument("--boundary", default="product")
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--resolution", type=int, help="grid intervals per unit length")
    p = sub.add_parser("report", help="re-emit reports from results.json files under --out")
    _common(p)
    p = sub.add_parser("validate", help="normalize a config and list every violated guard")
    _common(p)
    p.add_argument("--experiment", help="experiment name when the config omits it")
    return ap


def _raw_config(args, experiment=None):
    raw = load_config(args.config) if args.config else {}
    for item in args.set:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError([("bad-override", f"--set expects KEY=VALUE, got {item!r}")])
        raw[key.strip()] = _value(val)
    for k in ("out", "seed", "jobs"):
        v = getattr(args, k)
        if v is not None:
            raw[k] = v
    if experiment is not None:
        raw["experiment"] = experiment
    return raw


def _print_summary(rs):
    failed = [r for r in rs.rows if not r.passed]
    print(f"{rs.experiment}: {len(rs.rows)} rows, {len(failed)} failed, {rs.runtime:.1f} s")
    for k in sorted(rs.constants):
        print(f"  {k} = {rs.constants[k]:.6g}")
    for r in failed:
        print(f"  FAIL {r.quantity} [{r.params}] measured={r.measured:.6g} bound={r.bound:.6g}")


def cmd_suite(args, experiment):
    cfg = validate_config(_raw_config(args, experiment), echo=True)
    rs, status = run_experiment(cfg)
    _print_summary(rs)
    return status


def cmd_solve(args):
    from .solver import BallProblem, boundary_from_preset, solve_dirichlet, solve_harmonic
    from .harness.suites import coefficient_field, correctors

    raw = _raw_config(args, "approx-rate")
    raw.update(preset=args.preset, eps=[args.eps], radius=args.radius, resolution=args.resolution)
    if args.preset == "identity":
        raw["eps"] = None
    cfg = validate_config(raw)
    bnd = boundary_from_preset(args.boundary)
    if cfg.oscillating:
        eps = cfg.eps[0]
        pb = BallProblem((0, 0, 0), cfg.radius, bnd, epsilon=eps, coefficients=coefficient_field(cfg))
        u = solve_dirichlet(pb, C=correctors(cfg), n=cfg.grid_n(eps))
    else:
        u = solve_harmonic(BallProblem((0, 0, 0), cfg.radius, bnd), n=cfg.grid_n(None))
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, "solution.csv")
    u.export_csv(path)
    print(f"{u.backend} solve: h = {u.h:.6g}, residual = {u.residual:.3e}, wrote {path}")
    return 0


def cmd_report(args):
    out = args.out or "results"
    if not os.path.isdir(out):
        raise ValidationError(f"no results directory {out!r}")
    status = 0
    found = False
    for name in sorted(os.listdir(out)):
        path = os.path.join(out, name, "results.json")
        if os.path.isfile(path):
            found = True
            rs = load_results(path)
            emit_report(rs, out)
            _print_summary(rs)
            status = max(status, rs.exit_status)
    if not found:
        print(f"no results.json under {out}")
    return status


def cmd_validate(args):
    raw = _raw_config(args)
    if args.experiment:
        raw["experiment"] = args.experiment
    cfg = validate_config(raw, echo=True)
    print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        if args.command in SUITE_COMMANDS:
            return cmd_suite(args, SUITE_COMMANDS[args.command])
        if args.command == "solve":
            return cmd_solve(args)
        if args.command == "report":
            return cmd_report(args)
        return cmd_validate(args)
    except ConfigError as exc:
        for name, msg in exc.errors:
            print(f"error [{name}]: {msg}", file=sys.stderr)
        return 2
    except ResolutionError as exc:
        print(f"error [resolution-guard]: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
