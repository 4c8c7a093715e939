"""Experiment suites.

Each suite turns an :class:`ExperimentConfig` into a :class:`ResultSet`.
Independent config points (cell sizes, eps values, boundary presets) are
dispatched through :func:`pmap`; every job returns plain numbers, and
rows are sorted canonically before writing, so outputs do not depend on
the worker count.
"""
from __future__ import annotations

import json
import math
import multiprocessing
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from fractions import Fraction
from functools import partial
from importlib import resources

import numpy as np

from .. import geometry as geo
from .. import spectra as sp
from ..cell import (field_from_preset, flux_average, homogenized_matrix, identity_field,
                    min_det_check, solve_cell_problem)
from ..errors import DegenerateInputError
from ..solver import (BallProblem, boundary_from_preset, harmonic_approximant, solve_dirichlet,
                      solve_harmonic)
from .config import ConfigError, ExperimentConfig
from .report import emit_report
from .results import ResultSet, Sweep, Table, make_row

CELL_PRESETS = {"identity": "identity", "layered": "layered",
                "checkerboard": "checkerboard-smoothed", "trig-tensor": "trig-tensor"}
ORIGIN = np.zeros(3)
SANDWICH_SLACK = 1e-12
REGRESSION = 0.25

_CACHE: dict = {}


def clear_cache():
    """Drop cached solves, correctors and critical sets."""
    _CACHE.clear()


def _cached(key, fn):
    if key not in _CACHE:
        _CACHE[key] = fn()
    return _CACHE[key]


def pmap(fn, items, jobs=1):
    """Ordered map, in-process for ``jobs == 1``, else over a fork pool."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=min(jobs, len(items)), mp_context=ctx) as ex:
        return list(ex.map(fn, items))


def load_baseline() -> dict:
    """Checked-in fitted constants used for regression rows."""
    text = resources.files("homcrit.data").joinpath("baseline.json").read_text(encoding="utf-8")
    return json.loads(text)


def frac(x):
    f = Fraction(float(x)).limit_denominator(1 << 16)
    return f"{f.numerator}/{f.denominator}" if f.denominator != 1 else str(f.numerator)


def tag(x):
    return frac(x).replace("/", "-")


def loglog_slope(xs, ys):
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    ok = (xs > 0) & (ys > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(xs[ok]), np.log(ys[ok]), 1)[0])


# ---------------------------------------------------------------------------
# shared building blocks (cached per process)


def _params_key(cfg):
    return tuple(sorted(cfg.preset_params.items()))


def coefficient_field(cfg, n=None):
    name = CELL_PRESETS.get(cfg.preset)
    if name is None:
        raise ConfigError([("unsupported-preset", f"preset {cfg.preset!r} has no coefficient field")])
    n = cfg.cell_n if n is None else n
    return _cached(("field", name, _params_key(cfg), n),
                   lambda: field_from_preset(name, n, **cfg.preset_params))


def correctors(cfg):
    A = coefficient_field(cfg)
    return _cached(("cell", cfg.preset, _params_key(cfg), cfg.cell_n), lambda: solve_cell_problem(A))


def effective_matrix(cfg):
    if not cfg.oscillating:
        return np.eye(3)
    return homogenized_matrix(coefficient_field(cfg), correctors(cfg))


def boundary_degree(spec):
    b = boundary_from_preset(spec)
    return b.band_limit


def solve(cfg, eps, radius, boundary, oscillating=None):
    """Cached solve on ``B(0, radius)``; ``eps=None`` or A = I gives the Laplace problem."""
    osc = cfg.oscillating if oscillating is None else oscillating
    key = ("solve", cfg.preset if osc else "identity", _params_key(cfg) if osc else (),
           cfg.cell_n, eps if osc else None, radius, boundary,
           cfg.grid_n(eps if osc else None, radius))

    def run():
        bnd = boundary_from_preset(boundary)
        if not osc:
            pb = BallProblem(ORIGIN, radius, bnd)
            return solve_harmonic(pb, tol=1e-12, n=cfg.grid_n(None, radius))
        pb = BallProblem(ORIGIN, radius, bnd, epsilon=eps, coefficients=coefficient_field(cfg))
        return solve_dirichlet(pb, C=correctors(cfg), n=cfg.grid_n(eps, radius))

    return _cached(key, run)


def lattice_spacing(u, region):
    return max(u.h, float(np.max(region.semi_axes)) / 64.0)


def critical_set(cfg, u, region, pad, key):
    return _cached(("crit", key, pad), lambda: geo.find_critical_points(u, region.grow(pad)))


def _in_region(points, region):
    X = np.array([p.x for p in points]).reshape(-1, 3)
    return X[region.contains(X)] if len(X) else X


# ---------------------------------------------------------------------------
# cell-convergence


def _cell_job(cfg, n):
    A = coefficient_field(cfg, n)
    C = solve_cell_problem(A)
    ah = homogenized_matrix(A, C)
    fl = flux_average(A, C)
    return {"n": n, "a_hat": ah.tolist(), "flux": fl.tolist(), "mu": min_det_check(C)["mu"],
            "residual": C.residual}


def suite_cell(cfg: ExperimentConfig) -> ResultSet:
    if cfg.preset not in CELL_PRESETS:
        raise ConfigError([("unsupported-preset", "cell-convergence needs a coefficient preset")])
    rs = ResultSet(cfg.experiment)
    ex = cfg.experiment
    sizes = sorted(cfg.cell_sizes or [cfg.cell_n])
    out = pmap(partial(_cell_job, cfg), sizes, cfg.jobs)
    layered = cfg.preset == "layered"
    if layered:
        mean = cfg.preset_params.get("mean", 2.0)
        amp = cfg.preset_params.get("amplitude", 1.0)
        axis = cfg.preset_params.get("axis", 0)
        hmean = math.sqrt(mean * mean - amp * amp)
        exact = np.full(3, float(mean))
        exact[axis] = hmean
        exact = np.diag(exact)
        mu_exact = hmean / (mean + abs(amp))
    finest = out[-1]
    table = []
    errs, mu_errs, self_errs = [], [], []
    for rec in out:
        ah = np.array(rec["a_hat"])
        fl = np.array(rec["flux"])
        p = {"n": rec["n"]}
        rs.rows.append(make_row(ex, p, "flux_energy_gap", np.abs(ah - fl).max(), 1e-8,
                                np.abs(ah - fl).max() <= 1e-8, "oracle:flux-energy-agreement"))
        sym = 0.5 * (ah + ah.T)
        lam = float(np.linalg.eigvalsh(sym).min())
        rs.rows.append(make_row(ex, p, "a_hat_min_eigenvalue", lam, 0.0, lam > 0, "bound:ellipticity"))
        rs.rows.append(make_row(ex, p, "mu_positive", rec["mu"], 0.0, rec["mu"] > 0, "bound:invertibility"))
        if layered:
            e = float(np.abs(ah - exact).max())
            me = abs(rec["mu"] - mu_exact)
            errs.append(e)
            mu_errs.append(me)
            if rec is finest:
                rs.rows.append(make_row(ex, p, "a_hat_error", e, 1e-4, e <= 1e-4, "oracle:layered-closed-form"))
                rs.rows.append(make_row(ex, p, "mu_error", me, 1e-4, me <= 1e-4, "oracle:layered-closed-form"))
        else:
            e = float(np.abs(ah - np.array(finest["a_hat"])).max())
            self_errs.append(e)
        table.append((rec["n"], *ah.ravel(), rec["mu"], rec["residual"]))
    if not layered and len(out) > 2:
        diffs = self_errs[:-1]
        mono = all(b <= a * 1.05 + 1e-12 for a, b in zip(diffs, diffs[1:]))
        rs.rows.append(make_row(ex, {"n": sizes[-1]}, "a_hat_self_convergence", diffs[-1], diffs[0], mono,
                                "bound:self-convergence"))
    # A = I: the correctors vanish, so det(I + grad chi) = 1 identically
    C0 = solve_cell_problem(identity_field())
    mu0 = min_det_check(C0)["mu"]
    rs.rows.append(make_row(ex, {"preset": "identity"}, "mu_identity", mu0, 1.0, mu0 == 1.0,
                            "oracle:identity-exact"))
    rs.tables.append(Table("cell_convergence",
                           ("n",) + tuple(f"a{i}{j}" for i in range(1, 4) for j in range(1, 4)) + ("mu", "residual"),
                           table))
    if layered:
        sw = Sweep("cell_error_vs_n", "cell resolution n", "error", [
            ("a_hat", [float(n) for n in sizes], [max(e, 1e-17) for e in errs]),
            ("mu", [float(n) for n in sizes], mu_errs)], loglog=True)
        sw.slopes["mu"] = loglog_slope(sizes, mu_errs)
        rs.sweeps.append(sw)
        rs.constants["mu_error_slope"] = sw.slopes["mu"]
    else:
        rs.sweeps.append(Sweep("cell_self_convergence", "cell resolution n", "|A_n - A_finest|",
                               [("a_hat", [float(n) for n in sizes[:-1]], self_errs[:-1])], loglog=True))
    return rs


# ---------------------------------------------------------------------------
# approx-rate


def _approx_job(cfg, eps):
    u = solve(cfg, eps, cfg.radius, cfg.boundary)
    ha = harmonic_approximant(u)
    return {"eps": eps, "h": u.h, "e_sup": ha.e_sup, "e_grad": ha.e_grad, "normalizer": ha.normalizer,
            "rel_sup": ha.rel_sup, "rel_grad": ha.rel_grad}


def suite_approx(cfg: ExperimentConfig) -> ResultSet:
    if not cfg.oscillating:
        raise ConfigError([("unsupported-preset", "approx-rate needs an oscillating coefficient preset")])
    rs = ResultSet(cfg.experiment)
    ex = cfg.experiment
    eps = sorted(cfg.eps)
    out = pmap(partial(_approx_job, cfg), eps, cfg.jobs)
    xs = [o["eps"] for o in out]
    for kind in ("rel_sup", "rel_grad"):
        ys = [o[kind] for o in out]
        s = loglog_slope(xs, ys)
        rs.rows.append(make_row(ex, {"eps_min": xs[0], "eps_max": xs[-1]}, f"{kind}_slope", s, 0.5, s >= 0.5,
                                "bound:rate-one-half"))
        rs.constants[f"{kind}_slope"] = s
        rs.constants[f"C_{kind}"] = max(y / math.sqrt(x) for x, y in zip(xs, ys))
    rs.tables.append(Table("approx_rate", ("eps", "h", "e_sup", "e_grad", "normalizer", "rel_sup", "rel_grad"),
                           [(o["eps"], o["h"], o["e_sup"], o["e_grad"], o["normalizer"], o["rel_sup"],
                             o["rel_grad"]) for o in out]))
    sw = Sweep("approx_rate", "eps", "relative error", [
        ("rel_sup", xs, [o["rel_sup"] for o in out]),
        ("rel_grad", xs, [o["rel_grad"] for o in out]),
        ("eps^(1/2)", xs, [math.sqrt(x) for x in xs])], loglog=True)
    sw.slopes = {"rel_sup": rs.constants["rel_sup_slope"], "rel_grad": rs.constants["rel_grad_slope"]}
    rs.sweeps.append(sw)
    return rs


# ---------------------------------------------------------------------------
# doubling


def _doubling_job(cfg, spec):
    u = solve(cfg, None, cfg.radius, spec, oscillating=False)
    radii = sorted(cfg.radii or [cfg.radius / 4])
    dense = np.geomspace(radii[0], radii[-1], 9)
    return {"spec": spec, "ell": boundary_degree(spec), "radii": radii,
            "N_star": [sp.doubling_index(u, ORIGIN, r, cfg.q).N_star for r in radii],
            "N": [sp.almgren_frequency(u, ORIGIN, r, cfg.q).N for r in radii],
            "sweep": sp.frequency_sweep(u, ORIGIN, dense, q=cfg.q)}


def sandwich_violations(corpus, radii):
    bad = 0
    checked = 0
    for e in corpus:
        try:
            ns = sp.spectral_doubling(e, radii)
            lo = sp.spectral_frequency(e, radii / 2)
            hi = sp.spectral_frequency(e, radii)
        except DegenerateInputError:
            continue
        checked += len(radii)
        bad += int(np.sum((ns < lo - SANDWICH_SLACK) | (ns > hi + SANDWICH_SLACK)))
    return bad, checked


def suite_doubling(cfg: ExperimentConfig) -> ResultSet:
    if cfg.preset != "identity":
        raise ConfigError([("unsupported-preset", "doubling runs on preset identity")])
    rs = ResultSet(cfg.experiment)
    ex = cfg.experiment
    specs = cfg.boundary if isinstance(cfg.boundary, (list, tuple)) else [cfg.boundary]
    out = pmap(partial(_doubling_job, cfg), list(specs), cfg.jobs)
    series = []
    for o in out:
        ell = o["ell"]
        for r, ns, N in zip(o["radii"], o["N_star"], o["N"]):
            p = {"boundary": o["spec"], "ell": ell, "r": r, "n": cfg.grid_n(None)}
            rs.rows.append(make_row(ex, p, "n_star_error", abs(ns - ell), 1e-6, abs(ns - ell) <= 1e-6,
                                    "oracle:homogeneous-harmonic"))
            rs.rows.append(make_row(ex, p, "frequency_error", abs(N - ell), 1e-6, abs(N - ell) <= 1e-6,
                                    "oracle:homogeneous-harmonic"))
        rs.tables.append(Table(f"doubling_{o['spec']}", ("r", "Nstar", "N", "Wkappa"), o["sweep"]))
        series.append((f"{o['spec']} (l={ell})", [row[0] for row in o["sweep"]], [row[1] for row in o["sweep"]]))
    corpus = sp.spectral_corpus(cfg.seed, cfg.corpus_size, cfg.L_max)
    bad, checked = sandwich_violations(corpus, np.geomspace(1 / 8, 1.0, 16))
    rs.rows.append(make_row(ex, {"corpus": cfg.corpus_size, "seed": cfg.seed, "checks": checked},
                            "sandwich_violations", bad, 0, bad == 0, "bound:sandwich", ratio=float(bad)))
    rs.sweeps.append(Sweep("doubling_index_vs_r", "r", "N*", series))
    return rs


# ---------------------------------------------------------------------------
# weiss (spectral corpus)


def _perturbed(e, delta, rng, q):
    """``u + delta * ||u - u(0)|| * w`` with ``sup |w| = 1`` on the unit sphere."""
    w = rng.standard_normal(e.coeffs.size)
    quad = sp.hm.sphere_quadrature(q)
    wexp = replace(e, coeffs=w)
    w = w / np.abs(wexp.evaluate(quad.nodes + e.center)).max()
    scale = math.sqrt(float(np.sum(e.degree_energy()[1:])))
    return replace(e, coeffs=e.coeffs + delta * scale * w)


def stability_constant(corpus, L, seed, q, deltas=(1e-3, 1e-4)):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for e in corpus:
        try:
            n0 = float(sp.spectral_doubling(e, 1.0))
        except DegenerateInputError:
            continue
        pert = [_perturbed(e, d, rng, q) for d in deltas]
        if n0 > L:
            continue
        for d, v in zip(deltas, pert):
            worst = max(worst, abs(float(sp.spectral_doubling(v, 1.0)) - n0) / d)
    return worst


def suite_weiss(cfg: ExperimentConfig) -> ResultSet:
    if cfg.preset != "spectral-corpus":
        raise ConfigError([("unsupported-preset", "weiss runs on preset spectral-corpus")])
    rs = ResultSet(cfg.experiment)
    ex = cfg.experiment
    base = {"corpus": cfg.corpus_size, "seed": cfg.seed, "L_max": cfg.L_max}
    corpus = sp.spectral_corpus(cfg.seed, cfg.corpus_size, cfg.L_max)

    ident = []
    for i, e in enumerate(corpus):
        c = sp.weiss_identity_check(e)
        ident.append((i, c["kappa"], c["lhs"], c["rhs"], c["gap"]))
    gap = max(row[4] for row in ident)
    rs.rows.append(make_row(ex, base, "weiss_identity_gap", gap, 1e-10, gap <= 1e-10, "oracle:spectral-identity"))
    rs.tables.append(Table("weiss_identity", ("member", "kappa", "lhs", "rhs", "gap"), ident))

    radii = np.linspace(0.25, 1.0, 32)
    kappas = (0.5, 1.0, 1.7, 2.0, 2.5)
    for kappa in kappas:
        worst = min(float(np.diff(sp.weiss_functional(e, kappa, radii)).min()) for e in corpus)
        rs.rows.append(make_row(ex, {**base, "kappa": kappa}, "weiss_min_increment", worst, -1e-10,
                                worst >= -1e-10, "bound:monotone"))

    n_hyp = conc_bad = turn_bad = 0
    worst_turn = 0.0
    for e in corpus:
        A = e.degree_energy()
        if A[0] > 0:
            continue
        for l in range(1, cfg.L_max + 1):
            c = sp.concentration_check(e, l, cfg.window)
            if not c["hypothesis"]:
                continue
            n_hyp += 1
            if min(c["lead_slack"], c["low_slack"], c["high_slack"]) < -SANDWICH_SLACK:
                conc_bad += 1
            if c["turning_slack"] < -SANDWICH_SLACK:
                turn_bad += 1
            if c["eta"] > 0:
                worst_turn = max(worst_turn, c["turning"] / (8 * c["eta"]))
    p = {**base, "window": cfg.window}
    rs.rows.append(make_row(ex, p, "concentration_violations", conc_bad, 0, conc_bad == 0,
                            "bound:concentration", ratio=float(conc_bad)))
    rs.rows.append(make_row(ex, p, "turning_violations", turn_bad, 0, turn_bad == 0, "bound:turning-8eta",
                            ratio=float(turn_bad)))
    rs.rows.append(make_row(ex, p, "hypothesis_cases", n_hyp, 1, n_hyp >= 1, "bound:nonvacuous"))
    rs.constants["turning_over_8eta_max"] = worst_turn

    drop_bad = drop_n = 0
    for e in corpus:
        for l in range(1, cfg.L_max + 1):
            for delta in (cfg.delta0, 1 / 8, 1 / 2):
                try:
                    c = sp.frequency_drop_check(e, l, delta)
                except DegenerateInputError:
                    continue
                if c["hypothesis"]:
                    drop_n += 1
                    drop_bad += int(c["slack"] < -SANDWICH_SLACK)
    rs.rows.append(make_row(ex, {**base, "checks": drop_n}, "frequency_drop_violations", drop_bad, 0,
                            drop_bad == 0, "bound:frequency-drop", ratio=float(drop_bad)))

    C = stability_constant(corpus, cfg.L_max, cfg.seed + 1, 2 * (cfg.L_max + 1))
    rs.constants["C_stability"] = C
    _regression_row(rs, base, "C_stability", C, "weiss.C_stability")

    e0 = corpus[1]
    k0 = float(sp.spectral_frequency(e0, 0.5, centered=False))
    rs.tables.append(Table("expansion_1", ("l", "m", "a"),
                           [(l, m, float(e0.coeffs[sp.hm.lm_index(l, m)])) for l, m in sp.hm.lm_pairs(e0.L_max)]))
    rs.tables.append(Table("frequency_sweep_1", ("r", "Nstar", "N", "Wkappa"),
                           sp.frequency_sweep(e0, ORIGIN, np.geomspace(1 / 8, 1.0, 16), kappa=k0)))
    rs.sweeps.append(Sweep("weiss_functional_member_1", "r", "W_kappa(r)",
                           [(f"kappa={k:g}", radii.tolist(), sp.weiss_functional(e0, k, radii).tolist())
                            for k in kappas]))
    return rs


def _regression_row(rs, params, quantity, value, key, baseline=None):
    baseline = load_baseline() if baseline is None else baseline
    ref = baseline.get(key)
    if ref is None:
        rs.rows.append(make_row(rs.experiment, params, quantity, value, float("nan"), False, f"baseline:{key}:missing"))
        return
    dev = abs(value - ref) / abs(ref) if ref else float("inf")
    rs.rows.append(make_row(rs.experiment, params, quantity, value, ref, dev <= REGRESSION, f"baseline:{key}",
                            ratio=value / ref if ref else float("nan")))


# ---------------------------------------------------------------------------
# turning


def turning_ladder(u, eps, ell, window, q=16, L_max=8):
    """Turning between 1/4 and 2^-(J+3) against the doubling telescope, centre 0."""
    ks = [k for k in range(1, 64) if 2.0 ** -k >= eps * (1 - 1e-12)]
    ns = {k: sp.doubling_index(u, ORIGIN, 2.0 ** -k, q).N_star for k in ks}
    rows = []
    J = 0
    while 2.0 ** (-J - 3) >= eps * (1 - 1e-12):
        r_min = 2.0 ** (-J - 3)
        D = sp.turning_distance(u, ORIGIN, ell, r_min, 0.25, q, L_max)
        T = ns[1] + ns[2] - ns[J + 2] - ns[J + 3]
        scale = math.sqrt(2.0 ** J * eps)
        win = all(abs(ns[k] - ell) <= window for k in range(1, J + 4))
        rows.append({"J": J, "r_min": r_min, "D": D, "T": T, "excess": D - 8 * T, "C_J": D / scale,
                     "window": win})
        J += 1
    return rows, ns


def _turning_job(cfg, eps):
    u = solve(cfg, eps, cfg.radius, cfg.boundary)
    rows, ns = turning_ladder(u, eps, cfg.ell, cfg.window, cfg.q, cfg.L_max)
    return {"eps": eps, "rows": rows, "ns": sorted(ns.items())}


def suite_turning(cfg: ExperimentConfig) -> ResultSet:
    if not cfg.oscillating:
        raise ConfigError([("unsupported-preset", "turning needs an oscillating coefficient preset")])
    rs = ResultSet(cfg.experiment)
    ex = cfg.experiment
    baseline = load_baseline()
    eps_list = sorted(cfg.eps)
    out = pmap(partial(_turning_job, cfg), eps_list, cfg.jobs)
    table, series, fits = [], [], []
    for o in out:
        eps = o["eps"]
        key = f"turning.C_fit.{frac(eps)}"
        c_fit = max(r["C_J"] for r in o["rows"])
        c_exc = max(0.0, max(r["excess"] / math.sqrt(2.0 ** r["J"] * eps) for r in o["rows"]))
        fits.append(c_fit)
        rs.constants[f"C_fit[eps={frac(eps)}]"] = c_fit
        rs.constants[f"C_excess[eps={frac(eps)}]"] = c_exc
        _regression_row(rs, {"eps": eps, "boundary": cfg.boundary}, "C_fit", c_fit, key, baseline)
        ref = baseline.get(key, c_fit)
        for r in o["rows"]:
            bound = 8 * r["T"] + (1 + REGRESSION) * ref * math.sqrt(2.0 ** r["J"] * eps)
            rs.rows.append(make_row(ex, {"eps": eps, "J": r["J"]}, "turning_vs_telescope", r["D"], bound,
                                    r["D"] <= bound, "bound:turning-telescope"))
            table.append((eps, r["J"], r["r_min"], r["D"], r["T"], r["excess"], r["C_J"], r["window"]))
        series.append((f"eps={frac(eps)}", [r["r_min"] for r in o["rows"]], [r["D"] for r in o["rows"]]))
        rs.tables.append(Table(f"turning_doubling_eps={tag(eps)}", ("r", "Nstar"),
                               [(2.0 ** -k, v) for k, v in o["ns"]]))
    if len(fits) > 1:
        spread = max(fits) / min(fits)
        rs.rows.append(make_row(ex, {"eps": ",".join(frac(e) for e in eps_list)}, "C_fit_spread", spread,
                                1 + REGRESSION, spread <= 1 + REGRESSION, "bound:cross-eps-stability"))
    rs.tables.append(Table("turning", ("eps", "J", "r_min", "D", "T", "excess", "C_J", "window_ok"), table))
    rs.sweeps.append(Sweep("turning_vs_scale", "r_min", "turning distance", series, loglog=True))
    return rs


# ---------------------------------------------------------------------------
# two-point


def _expansion_at(f, x, r=1.0, q=16, L_max=3):
    x = np.asarray(x, float)
    c = float(f(x[None])[0])
    return sp.decompose(sp.sphere_trace(f, x, r, q).centered(c), L_max)


def two_point_case(tau, t, ell=2, q=16):
    """``u = x1 x2 + tau x1 x3``, second point ``t e3``; returns ratio and eta."""

    def f(x):
        x = np.asarray(x, float)
        return x[..., 0] * x[..., 1] + tau * x[..., 0] * x[..., 2]

    x1 = np.array([0.0, 0.0, t])
    res = geo.two_point_turning(f, ORIGIN, x1, ell, r=1.0, q=q, L_max=3)
    Ns = {}
    for name, x in (("0", ORIGIN), ("1", x1)):
        e = _expansion_at(f, x, q=q)
        Ns[name] = (float(sp.spectral_frequency(e, 1.0)), float(sp.spectral_frequency(e, 0.5)))
    eta = Ns["0"][0] + Ns["1"][0] - Ns["0"][1] - Ns["1"][1]
    return {"tau": tau, "t": t, "ratio": t * res["ratio"], "eta": eta, "N": Ns}


def suite_two_point(cfg: ExperimentConfig) -> ResultSet:
    if cfg.preset != "identity":
        raise ConfigError([("unsupported-preset", "two-point runs on preset identity")])
    rs = ResultSet(cfg.experiment)
    ex = cfg.experiment
    u = solve(cfg, None, cfg.radius, "product", oscillating=False)
    along = geo.two_point_turning(u, ORIGIN, (0, 0, 0.3), 2, q=cfg.q, L_max=cfg.L_max)["ratio"]
    across = geo.two_point_turning(u, ORIGIN, (0.3, 0, 0), 2, q=cfg.q, L_max=cfg.L_max)["ratio"]
    p = {"boundary": "product", "n": cfg.grid_n(None)}
    rs.rows.append(make_row(ex, {**p, "direction": "e3"}, "two_point_ratio", along, 1e-6, along <= 1e-6,
                            "oracle:invariant-direction"))
    rs.rows.append(make_row(ex, {**p, "direction": "e1"}, "two_point_ratio_error", abs(across - math.sqrt(5)),
                            1e-6, abs(across - math.sqrt(5)) <= 1e-6, "oracle:gram-closed-form"))
    baseline = load_baseline()
    ref = baseline.get("two_point.C")
    table, cs = [], []
    for tau in (0.02, 0.05, 0.1, 0.2):
        for t in (0.1, 0.2):
            c = two_point_case(tau, t, cfg.ell, cfg.q)
            hyp = all(abs(v - cfg.ell) <= cfg.window for pair in c["N"].values() for v in pair)
            C = c["ratio"] / math.sqrt(c["eta"]) if c["eta"] > 0 else float("nan")
            table.append((tau, t, c["eta"], c["ratio"], C, hyp))
            if hyp:
                cs.append(C)
                if ref is not None:
                    bound = (1 + REGRESSION) * ref * math.sqrt(c["eta"])
                    rs.rows.append(make_row(ex, {"tau": tau, "t": t}, "two_point_vs_sqrt_eta", c["ratio"], bound,
                                            c["ratio"] <= bound, "bound:two-point-sqrt-eta"))
    rs.rows.append(make_row(ex, {"window": cfg.window}, "two_point_cases", len(cs), 1, len(cs) >= 1,
                            "bound:nonvacuous"))
    if cs:
        rs.constants["C_two_point"] = max(cs)
        _regression_row(rs, {"window": cfg.window}, "C_two_point", max(cs), "two_point.C", baseline)
    rs.tables.append(Table("two_point", ("tau", "t", "eta", "ratio", "C", "hypothesis"), table))
    rs.sweeps.append(Sweep("two_point_ratio_vs_sqrt_eta", "sqrt(eta)", "|x1| ||n.grad P|| / ||P||",
                           [(f"t={t:g}", [math.sqrt(r[2]) for r in table if r[1] == t],
                             [r[3] for r in table if r[1] == t]) for t in (0.1, 0.2)], loglog=True))
    return rs


# ---------------------------------------------------------------------------
# cover


def degree_projection(u, x0, ell, r=0.25, q=16, L_max=8):
    c = float(u.value(np.asarray(x0, float)[None])[0])
    tr = sp.sphere_trace(u, x0, r, q).centered(c)
    return sp.decompose(tr, max(L_max, ell)).component(ell)


def zone_checks(cfg, u, points, ell, r_star, anchors=(0.0, 0.2, -0.2)):
    """No-critical-zone reports around detected points nearest ``(0, 0, a)``."""
    X = np.asarray(points).reshape(-1, 3)
    out = []
    seen = set()
    for a in anchors:
        k = int(np.argmin(np.linalg.norm(X - np.array([0.0, 0.0, a]), axis=1)))
        if k in seen:
            continue
        seen.add(k)
        x0 = X[k]
        V = geo.almost_invariant_subspace(geo.gram_matrix(degree_projection(u, x0, ell, q=cfg.q, L_max=cfg.L_max)),
                                          cfg.eta)
        z = geo.no_critical_zone_check(u, x0, V, r_star / 64, c0=0.25, gamma=cfg.gamma, points=X,
                                       n_samples=2000, seed=cfg.seed)
        out.append({"x0": x0.tolist(), "violations": int(len(z["violations"])), "min_grad": z["min_grad"],
                    "dim_V": V.dim})
    return out


def identity_cover_family(cfg, eps_list):
    u = solve(cfg, None, 2.0, cfg.boundary, oscillating=False)
    reg = geo.ball_region(ORIGIN, 0.5)
    cps = critical_set(cfg, u, reg, 0.0, ("identity", cfg.boundary, 2.0, cfg.grid_n(None, 2.0)))
    pts = _in_region(cps, reg)
    base = [geo.minimal_radius(u, x, cfg.ell, cfg.delta0, min(eps_list), cfg.eps0, n_samples=24, q=cfg.q)
            for x in pts]
    covers = {}
    for eps in eps_list:
        recs = [replace(r, r_star=max(r.r0, eps / cfg.eps0)) for r in base]
        covers[eps] = geo.build_cover(u, pts, cfg.ell, cfg.delta0, eps, cfg.eps0, reg, records=recs)
    return u, pts, covers


def _cover_layered_job(cfg, eps):
    u = solve(cfg, eps, 2.0, cfg.boundary)
    reg = geo.ellipsoid_region(effective_matrix(cfg), 0.5)
    cps = critical_set(cfg, u, reg, 0.05, ("osc", cfg.preset, eps, cfg.boundary))
    pts = _in_region(cps, reg)
    cov = geo.build_cover(u, pts, cfg.ell, cfg.delta0, eps, cfg.eps0, reg, n_samples=24, q=cfg.q)
    nstar = [sp.doubling_index(u, x, 0.5, cfg.q).N_star for x in pts]
    rmin = min((rec.r_star for rec in cov.records), default=eps / cfg.eps0)
    zones = zone_checks(cfg, u, pts, cfg.ell, rmin) if len(pts) else []
    lip = None
    sel = cov.centers[cov.selected]
    if len(sel) >= 2 and len(pts):
        k = int(np.argmin(np.linalg.norm(pts, axis=1)))
        V = geo.almost_invariant_subspace(
            geo.gram_matrix(degree_projection(u, pts[k], cfg.ell, q=cfg.q, L_max=cfg.L_max)), cfg.eta)
        lip = geo.lipschitz_graph_check(sel, V.basis, cfg.gamma)["ratio"]
    return {"eps": eps, "account": cov.account, "disjoint": cov.disjoint, "contained": cov.contained,
            "n_points": int(len(pts)), "n_selected": int(len(cov.selected)), "rows": cov.rows(),
            "nstar_min": min(nstar) if nstar else float("nan"),
            "nstar_low": int(sum(v <= 1.5 for v in nstar)), "zones": zones, "lipschitz": lip}


def _zone_rows(rs, params, zones):
    ex = rs.experiment
    bad = sum(z["violations"] for z in zones)
    rs.rows.append(make_row(ex, {**params, "anchors": len(zones)}, "zone_violations", bad, 0, bad == 0 and bool(zones),
                            "bound:cone-zone", ratio=float(bad)))
    if zones:
        g = min(z["min_grad"] for z in zones)
        rs.rows.append(make_row(ex, params, "zone_min_gradient", g, 0.0, g > 0, "bound:cone-zone"))


def suite_cover(cfg: ExperimentConfig) -> ResultSet:
    if cfg.preset == "spectral-corpus":
        raise ConfigError([("unsupported-preset", "cover needs a coefficient preset")])
    rs = ResultSet(cfg.experiment)
    ex = cfg.experiment
    ref_eps = sorted(cfg.reference_eps or [])
    osc_eps = sorted(cfg.eps or []) if cfg.oscillating else []
    _, pts_i, covers = identity_cover_family(cfg, sorted(set(ref_eps) | set(osc_eps)))
    for eps, cov in sorted(covers.items()):
        p = {"preset": "identity", "eps": eps}
        rs.rows.append(make_row(ex, p, "vitali_disjoint", float(cov.disjoint), 1.0, cov.disjoint, "bound:vitali"))
        rs.rows.append(make_row(ex, p, "cover_contained", float(cov.contained), 1.0, cov.contained,
                                "bound:containment"))
        rs.tables.append(Table(f"cover_identity_eps={tag(eps)}", ("x", "y", "z", "r", "label"), cov.rows()))
        rs.constants[f"account_identity[eps={frac(eps)}]"] = cov.account
    if len(ref_eps) > 1:
        acc = [covers[e].account for e in ref_eps]
        spread = max(acc) / min(acc) if min(acc) > 0 else float("inf")
        rs.rows.append(make_row(ex, {"preset": "identity", "eps": ",".join(frac(e) for e in ref_eps)},
                                "account_spread", spread, 2.0, spread < 2.0, "bound:account-stability"))
    cov_min = covers[min(covers)]
    sel = cov_min.centers[cov_min.selected]
    if len(sel) >= 2:
        lip = geo.lipschitz_graph_check(sel, [[0.0, 0.0, 1.0]], cfg.gamma)["ratio"]
        rs.rows.append(make_row(ex, {"preset": "identity"}, "lipschitz_ratio", lip, cfg.gamma, lip <= cfg.gamma,
                                "bound:cone-graph"))

    # no-critical-zone on the constant-coefficient corpus
    r_star_i = min(ref_eps or [cfg.eps0]) / cfg.eps0
    for spec, ell in ((cfg.boundary, cfg.ell), ("cubic", 3)):
        u = solve(cfg, None, 1.0, spec, oscillating=False)
        reg = geo.ball_region(ORIGIN, 0.5)
        cps = critical_set(cfg, u, reg, 0.1, ("identity", spec, 1.0, cfg.grid_n(None, 1.0)))
        X = np.array([c.x for c in cps]).reshape(-1, 3)
        zones = zone_checks(cfg, u, X, ell, r_star_i) if len(X) else []
        _zone_rows(rs, {"preset": "identity", "boundary": spec}, zones)

    out = pmap(partial(_cover_layered_job, cfg), osc_eps, cfg.jobs)
    for o in out:
        eps = o["eps"]
        p = {"preset": cfg.preset, "eps": eps}
        rs.rows.append(make_row(ex, p, "vitali_disjoint", float(o["disjoint"]), 1.0, o["disjoint"], "bound:vitali"))
        rs.rows.append(make_row(ex, p, "cover_contained", float(o["contained"]), 1.0, o["contained"],
                                "bound:containment"))
        ref = covers[eps].account
        ratio = o["account"] / ref if ref > 0 else float("inf")
        rs.rows.append(make_row(ex, p, "account_vs_identity", o["account"], ref,
                                0.5 <= ratio <= 2.0, "bound:account-2x-identity", ratio=ratio))
        rs.constants[f"account_{cfg.preset}[eps={frac(eps)}]"] = o["account"]
        active = eps < cfg.eps0
        rs.rows.append(make_row(ex, {**p, "active": active}, "low_doubling_critical_points", o["nstar_low"], 0,
                                o["nstar_low"] == 0 or not active, "bound:critical-doubling"))
        _zone_rows(rs, p, o["zones"])
        if o["lipschitz"] is not None:
            rs.rows.append(make_row(ex, p, "lipschitz_ratio", o["lipschitz"], cfg.gamma, o["lipschitz"] <= cfg.gamma,
                                    "bound:cone-graph"))
        rs.tables.append(Table(f"cover_{cfg.preset}_eps={tag(eps)}", ("x", "y", "z", "r", "label"), o["rows"]))
    series = [("identity", sorted(covers), [covers[e].account for e in sorted(covers)])]
    if out:
        series.append((cfg.preset, [o["eps"] for o in out], [o["account"] for o in out]))
    rs.sweeps.append(Sweep("cover_account_vs_eps", "eps", "sum of radii", series, loglog=True))
    return rs


# ---------------------------------------------------------------------------
# tube


def radius_ladder(r_min, r_max=0.25):
    out = []
    r = r_max
    while r >= r_min * (1 - 1e-12):
        out.append(r)
        r /= 2
    return out


def identity_skeleton(cfg):
    u = solve(cfg, None, 1.0, cfg.boundary, oscillating=False)
    reg = geo.ball_region(ORIGIN, 0.5)
    cps = critical_set(cfg, u, reg, 0.1, ("identity", cfg.boundary, 1.0, cfg.grid_n(None, 1.0)))
    return geo.critical_skeleton(cps, 4 * lattice_spacing(u, reg), reg)


def _tube_layered_job(cfg, eps):
    u = solve(cfg, eps, 2.0, cfg.boundary)
    reg = geo.ellipsoid_region(effective_matrix(cfg), 0.5)
    cps = critical_set(cfg, u, reg, 0.05, ("osc", cfg.preset, eps, cfg.boundary))
    S = geo.critical_skeleton(cps, 4 * lattice_spacing(u, reg), reg)
    rows = geo.tube_sweep(S, radius_ladder(eps), cfg.samples, cfg.seed)
    return {"eps": eps, "rows": rows, "segments": int(len(S))}


def monotone_violations(rows):
    rows = sorted(rows)
    return sum(int(b[1] < a[1] - 3 * math.hypot(a[2], b[2])) for a, b in zip(rows, rows[1:]))


def suite_tube(cfg: ExperimentConfig) -> ResultSet:
    if cfg.preset == "spectral-corpus":
        raise ConfigError([("unsupported-preset", "tube needs a coefficient preset")])
    rs = ResultSet(cfg.experiment)
    ex = cfg.experiment
    S = identity_skeleton(cfg)
    check = sorted(cfg.radii or [])
    ladder = radius_ladder(min(cfg.eps or [1 / 32]) if cfg.oscillating else 1 / 32)
    radii = sorted(set(check) | set(ladder))
    rows_i = geo.tube_sweep(S, radii, cfg.samples, cfg.seed)
    for r, v, se, _ in rows_i:
        if r in check:
            exact = math.pi * r * r + 4 / 3 * math.pi * r ** 3
            z = abs(v - exact) / se if se > 0 else float("inf")
            rs.rows.append(make_row(ex, {"preset": "identity", "r": r}, "tube_volume_z", z, 3.0, z <= 3.0,
                                    "oracle:cylinder-caps"))
    base = max(row[3] for row in rows_i if row[0] in ladder)
    rs.constants["tube_ratio_identity"] = base
    mv = monotone_violations(rows_i)
    rs.rows.append(make_row(ex, {"preset": "identity"}, "tube_monotone_violations", mv, 0, mv == 0,
                            "bound:tube-monotone", ratio=float(mv)))
    rs.tables.append(Table("tube_identity", ("r", "volume", "stderr", "ratio_r2"), rows_i))
    series = [("identity", [row[0] for row in rows_i], [row[3] for row in rows_i])]
    if cfg.oscillating:
        out = pmap(partial(_tube_layered_job, cfg), sorted(cfg.eps), cfg.jobs)
        for o in out:
            eps = o["eps"]
            b = max(row[3] for row in o["rows"])
            rs.constants[f"tube_ratio_{cfg.preset}[eps={frac(eps)}]"] = b
            rs.rows.append(make_row(ex, {"preset": cfg.preset, "eps": eps}, "tube_ratio_bound", b, 2 * base,
                                    b <= 2 * base, "bound:tube-2x-identity"))
            mv = monotone_violations(o["rows"])
            rs.rows.append(make_row(ex, {"preset": cfg.preset, "eps": eps}, "tube_monotone_violations", mv, 0,
                                    mv == 0, "bound:tube-monotone", ratio=float(mv)))
            rs.tables.append(Table(f"tube_{cfg.preset}_eps={tag(eps)}", ("r", "volume", "stderr", "ratio_r2"),
                                   o["rows"]))
            series.append((f"{cfg.preset} eps={frac(eps)}", [row[0] for row in o["rows"]],
                           [row[3] for row in o["rows"]]))
    rs.sweeps.append(Sweep("tube_ratio_vs_r", "r", "volume / r^2", series, loglog=True))
    return rs


# ---------------------------------------------------------------------------

SUITES = {
    "cell-convergence": suite_cell,
    "approx-rate": suite_approx,
    "doubling": suite_doubling,
    "weiss": suite_weiss,
    "turning": suite_turning,
    "two-point": suite_two_point,
    "cover": suite_cover,
    "tube": suite_tube,
}


def run_experiment(cfg: ExperimentConfig, write=True):
    """Run the named suite, write its report, return ``(ResultSet, exit_status)``."""
    t0 = time.perf_counter()
    rs = SUITES[cfg.experiment](cfg)
    rs.config = cfg.to_dict()
    rs.runtime = time.perf_counter() - t0
    rs.sort()
    if write:
        emit_report(rs, cfg.out)
    return rs, rs.exit_status
