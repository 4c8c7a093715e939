"""Acceptance battery: every suite at default settings, run twice.

The first run (one worker) feeds criteria 1-11; the second run, with a
cleared cache and two workers, must reproduce every CSV byte for byte.
"""
import time
from pathlib import Path

import pytest

from homcrit import spectra
from homcrit.harness import clear_cache, run_experiment, validate_config
from homcrit.harness.config import EXPERIMENTS

pytestmark = pytest.mark.slow


def _battery(out, jobs):
    clear_cache()
    results = {}
    for name in EXPERIMENTS:
        cfg = validate_config({"experiment": name, "out": str(out), "jobs": jobs, "seed": 7})
        rs, status = run_experiment(cfg)
        results[name] = (rs, status)
    return results


@pytest.fixture(scope="session")
def battery(tmp_path_factory):
    out = tmp_path_factory.mktemp("battery-1")
    return out, _battery(out, jobs=1)


def _rows(battery, exp, quantity):
    rs = battery[1][exp][0]
    rows = rs.rows_for(quantity)
    assert rows, f"{exp} produced no {quantity} rows"
    return rows


def _all_pass(rows):
    return all(r.passed for r in rows)


@pytest.mark.parametrize("exp", EXPERIMENTS)
def test_suite_exit_status(battery, exp):
    rs, status = battery[1][exp]
    failed = [(r.quantity, r.params) for r in rs.rows if not r.passed]
    assert status == 0, failed


def test_c01_homogenized_matrix(battery, record):
    rs = battery[1]["cell-convergence"][0]
    (row,) = _rows(battery, "cell-convergence", "a_hat_error")
    ok = record(1, row.passed and rs.runtime < 60,
                f"|A_hat - diag(sqrt3,2,2)| = {row.measured:.2e} at n=256, suite {rs.runtime:.1f} s")
    assert ok


def test_c02_invertibility_margin(battery, record):
    (mu,) = _rows(battery, "cell-convergence", "mu_error")
    (mu0,) = _rows(battery, "cell-convergence", "mu_identity")
    ok = record(2, mu.passed and mu0.passed, f"|mu - sqrt3/3| = {mu.measured:.2e}, identity mu = {mu0.measured!r}")
    assert ok


def test_c03_weiss_identity(battery, record):
    (row,) = _rows(battery, "weiss", "weiss_identity_gap")
    t0 = time.perf_counter()
    corpus = spectra.spectral_corpus(7, 200, 8)
    gap = max(spectra.weiss_identity_check(e)["gap"] for e in corpus)
    dt = time.perf_counter() - t0
    ok = record(3, row.passed and gap <= 1e-10 and dt < 5,
                f"max gap {row.measured:.2e} over 200 expansions, {dt:.2f} s")
    assert ok


def test_c04_weiss_monotonicity(battery, record):
    rows = _rows(battery, "weiss", "weiss_min_increment")
    worst = min(r.measured for r in rows)
    ok = record(4, _all_pass(rows) and len(rows) == 5, f"min increment {worst:.2e} over 5 kappas x 32 radii")
    assert ok


def test_c05_concentration_and_turning(battery, record):
    conc = _rows(battery, "weiss", "concentration_violations")[0]
    turn = _rows(battery, "weiss", "turning_violations")[0]
    hyp = _rows(battery, "weiss", "hypothesis_cases")[0]
    ok = record(5, conc.passed and turn.passed and hyp.passed,
                f"{int(hyp.measured)} hypothesis cases, violations {int(conc.measured)} / {int(turn.measured)}")
    assert ok


def test_c06_doubling_indices(battery, record):
    rows = _rows(battery, "doubling", "n_star_error")
    (sw,) = _rows(battery, "doubling", "sandwich_violations")
    worst = max(r.measured for r in rows)
    ok = record(6, _all_pass(rows) and len(rows) == 9 and sw.passed,
                f"max |N* - l| = {worst:.2e} (l = 1, 2, 3; n = 128), sandwich violations {int(sw.measured)}")
    assert ok


def test_c07_approximation_rate(battery, record):
    rs = battery[1]["approx-rate"][0]
    (s1,) = _rows(battery, "approx-rate", "rel_sup_slope")
    (s2,) = _rows(battery, "approx-rate", "rel_grad_slope")
    ok = record(7, s1.passed and s2.passed and rs.runtime < 600,
                f"slopes sup {s1.measured:.3f}, grad {s2.measured:.3f}, suite {rs.runtime:.0f} s")
    assert ok


def test_c08_turning_telescope(battery, record):
    fits = _rows(battery, "turning", "C_fit")
    bounds = _rows(battery, "turning", "turning_vs_telescope")
    detail = ", ".join(f"C_fit {r.measured:.4f} (baseline {r.bound:.4f})" for r in fits)
    ok = record(8, _all_pass(fits) and _all_pass(bounds) and len(fits) == 2, detail)
    assert ok


def test_c09_tube_volume(battery, record):
    z = _rows(battery, "tube", "tube_volume_z")
    b = _rows(battery, "tube", "tube_ratio_bound")
    detail = (f"identity max z {max(r.measured for r in z):.2f}; layered ratio "
              f"{max(r.measured for r in b):.2f} vs 2 x {b[0].bound / 2:.2f}")
    ok = record(9, _all_pass(z) and len(z) == 3 and _all_pass(b) and len(b) == 2, detail)
    assert ok


def test_c10_covering(battery, record):
    disj = _rows(battery, "cover", "vitali_disjoint")
    cont = _rows(battery, "cover", "cover_contained")
    (spread,) = _rows(battery, "cover", "account_spread")
    ok = record(10, _all_pass(disj) and _all_pass(cont) and spread.passed,
                f"{len(disj)} covers disjoint and contained, identity account spread {spread.measured:.3f}")
    assert ok


def test_c11_no_critical_zone(battery, record):
    zones = _rows(battery, "cover", "zone_violations")
    low = _rows(battery, "cover", "low_doubling_critical_points")
    bad = sum(r.measured for r in zones)
    ok = record(11, _all_pass(zones) and _all_pass(low) and len(zones) == 4,
                f"{len(zones)} corpus functions, {int(bad)} critical points in cone zones")
    assert ok


def test_c12_determinism(battery, tmp_path_factory, record):
    first = battery[0]
    second = tmp_path_factory.mktemp("battery-2")
    _battery(second, jobs=2)
    a = sorted(p.relative_to(first) for p in Path(first).rglob("*.csv"))
    b = sorted(p.relative_to(second) for p in Path(second).rglob("*.csv"))
    diff = [str(p) for p in a if (first / p).read_bytes() != (second / p).read_bytes()]
    ok = record(12, a == b and not diff and len(a) > 0,
                f"{len(a)} CSV files compared (1 vs 2 workers), {len(diff)} differ")
    assert a == b
    assert not diff
