import json
import subprocess
import sys

import numpy as np
import pytest
from numpy.testing import assert_allclose

from homcrit.cli import main
from homcrit.harness import (ConfigError, ResultSet, Sweep, Table, emit_report, load_results, run_experiment,
                             validate_config)
from homcrit.harness.results import fmt, make_row
from homcrit.harness.suites import load_baseline, loglog_slope, radius_ladder
from homcrit.harness.svg import line_plot


def error_names(raw):
    with pytest.raises(ConfigError) as info:
        validate_config(raw)
    return [n for n, _ in info.value.errors]


def test_defaults_filled():
    cfg = validate_config({"experiment": "weiss"})
    assert (cfg.eta, cfg.delta0, cfg.eps0, cfg.gamma, cfg.L_max, cfg.q) == (0.1, 1 / 64, 1 / 32, 0.1, 8, 16)
    assert cfg.preset == "spectral-corpus"


def test_aliases():
    assert validate_config({"experiment": "cell"}).experiment == "cell-convergence"
    assert validate_config({"experiment": "twopoint"}).experiment == "two-point"


def test_resolution_guard_names_required_n():
    with pytest.raises(ConfigError) as info:
        validate_config({"experiment": "approx", "eps": ["1/64"], "resolution": 128})
    (name, msg), = info.value.errors
    assert name == "resolution-guard"
    # h = 1/128 against eps/16 = 1/1024
    assert "1024" in msg


def test_each_guard_named():
    names = error_names({"experiment": "weiss", "delta0": 0.6, "eta": 0, "ell": 0, "q": 4, "bogus": 1})
    assert set(names) == {"delta0-range", "eta-range", "ell-range", "quadrature-order", "unknown-field"}


def test_unknown_experiment():
    assert error_names({"experiment": "nope"}) == ["unknown-experiment"]


def test_echo(tmp_path):
    validate_config({"experiment": "weiss", "out": str(tmp_path)}, echo=True)
    saved = json.loads((tmp_path / "config.json").read_text())
    assert saved["experiment"] == "weiss" and saved["eta"] == 0.1


def test_fmt():
    assert fmt(0.5) == "5.000000000000e-01"
    assert fmt(True) == "true"
    assert fmt(float("nan")) == "nan"


def test_empty_report(tmp_path):
    rs = ResultSet("weiss")
    paths = emit_report(rs, tmp_path)
    summary = (tmp_path / "weiss" / "summary.txt").read_text()
    assert "rows: 0" in summary and "status: pass" in summary
    assert rs.exit_status == 0
    assert (tmp_path / "weiss" / "results.csv").read_text().count("\n") == 1
    assert paths["summary"]


def test_report_roundtrip(tmp_path):
    rs = ResultSet("doubling")
    rs.rows.append(make_row("doubling", {"r": 0.5}, "q", 2.0, 1.0, False, "bound:test"))
    rs.tables.append(Table("t", ("a", "b"), [(1.0, 2.0)]))
    rs.sweeps.append(Sweep("s", "x", "y", [("line", [1.0, 2.0], [1.0, 4.0])], loglog=True, slopes={"line": 2.0}))
    rs.constants["C"] = 3.0
    emit_report(rs, tmp_path)
    back = load_results(tmp_path / "doubling")
    assert back.rows == rs.rows
    assert back.exit_status == 1
    raw = (tmp_path / "doubling" / "t.csv").read_bytes()
    assert raw == b"a,b\n1.000000000000e+00,2.000000000000e+00\n"
    svg = (tmp_path / "doubling" / "s.svg").read_text()
    assert "slope 2.000" in svg
    assert "C = 3.000000000000e+00" in (tmp_path / "doubling" / "summary.txt").read_text()


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    from homcrit.errors import ValidationError

    with pytest.raises(ValidationError):
        emit_report(ResultSet("weiss"), blocker)


def test_svg_flat_line():
    svg = line_plot(Sweep("flat", "r", "N*", [("x1x2", [0.1, 0.2, 0.4], [2.0, 2.0, 2.0])]))
    assert svg.startswith("<svg") and "polyline" in svg


def test_slope_fit():
    x = np.array([1 / 8, 1 / 16, 1 / 32])
    assert_allclose(loglog_slope(x, 3 * x ** 0.5), 0.5, rtol=1e-12)


def test_radius_ladder():
    assert radius_ladder(1 / 16) == [0.25, 0.125, 0.0625]


def test_baseline_keys():
    b = load_baseline()
    for k in ("turning.C_fit.1/16", "turning.C_fit.1/32", "two_point.C", "weiss.C_stability"):
        assert b[k] > 0


def test_small_weiss_run(tmp_path):
    cfg = validate_config({"experiment": "weiss", "corpus_size": 40, "out": str(tmp_path)})
    rs, status = run_experiment(cfg)
    assert rs.rows_for("weiss_identity_gap")[0].passed
    names = {p.name for p in (tmp_path / "weiss").iterdir()}
    assert {"results.csv", "summary.txt", "weiss_identity.csv", "expansion_1.csv"} <= names
    text = (tmp_path / "weiss" / "results.csv").read_bytes()
    assert text.startswith(b"experiment,params,quantity,measured,bound,ratio,pass,provenance\n")
    assert b"\r" not in text


def test_cli_validate_errors(capsys, tmp_path):
    code = main(["validate", "--experiment", "approx", "--set", "eps=[\"1/64\"]", "--set", "resolution=128",
                 "--out", str(tmp_path)])
    assert code == 2
    assert "resolution-guard" in capsys.readouterr().err


def test_cli_validate_ok(capsys, tmp_path):
    code = main(["validate", "--experiment", "weiss", "--seed", "11", "--out", str(tmp_path)])
    assert code == 0
    assert json.loads(capsys.readouterr().out)["seed"] == 11


def test_cli_suite_and_report(tmp_path):
    out = str(tmp_path)
    assert main(["weiss", "--out", out, "--set", "corpus_size=30"]) != 2
    assert main(["report", "--out", out]) in (0, 1)


def test_cli_solve(tmp_path):
    code = main(["solve", "--preset", "identity", "--set", "reference_resolution=8", "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "solution.csv").read_text().startswith("i,j,k,x,y,z,u,ux,uy,uz")


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "homcrit", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("cell", "solve", "approx", "doubling", "weiss", "turning", "twopoint", "cover", "tube", "report",
                "validate"):
        assert cmd in res.stdout
