import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from homcrit import geometry as geo
from homcrit import harmonics as hm
from homcrit.errors import ValidationError
from homcrit.solver import BallProblem, boundary_from_preset, solve_harmonic


@pytest.fixture(scope="module")
def product():
    return solve_harmonic(BallProblem((0, 0, 0), 1.0, boundary_from_preset("product")), n=32)


def coeffs_of(f, l=2):
    quad = hm.sphere_quadrature(8)
    Y = np.stack([hm.real_sph_harm(l, m, quad.nodes) for m in range(-l, l + 1)], axis=1)
    return Y.T @ (quad.weights * f(quad.nodes))


def test_gram_of_x1x2():
    # psi = x1 x2 / ||x1 x2||, ||x1 x2||^2 = 1/15; d1 psi = x2 / ||.||, mean x2^2 = 1/3
    Q = geo.gram_matrix(coeffs_of(lambda x: x[:, 0] * x[:, 1]))
    assert_allclose(Q, np.diag([5.0, 5.0, 0.0]), atol=1e-12)
    V = geo.almost_invariant_subspace(Q, 0.1)
    assert V.dim == 1
    assert_allclose(np.abs(V.basis[0]), [0, 0, 1], atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=5, max_size=5).filter(lambda c: np.linalg.norm(c) > 0.1))
def test_gram_consistency(c):
    psi = hm.SolidHarmonic(2, np.array(c)).normalized()
    Q = geo.gram_matrix(psi)
    rs = np.random.default_rng(0)
    # Monte Carlo sphere average with a finite-difference gradient
    y = rs.normal(size=(200_000, 3))
    y /= np.linalg.norm(y, axis=1)[:, None]
    for n in rs.normal(size=(3, 3)):
        n /= np.linalg.norm(n)
        d = (psi(y + 1e-5 * n) - psi(y - 1e-5 * n)) / 2e-5
        assert_allclose(n @ Q @ n, np.mean(d * d), rtol=0.02, atol=1e-3)


def test_invariant_split_of_rotated_mixture():
    a = coeffs_of(lambda x: x[:, 1] ** 2 - x[:, 2] ** 2)
    b = coeffs_of(lambda x: x[:, 0] * x[:, 1])
    a /= np.linalg.norm(a)
    b /= np.linalg.norm(b)
    tau = 0.1
    out = geo.invariant_split(np.sqrt(1 - tau ** 2) * a + tau * b, [[1, 0, 0]])
    assert_allclose(out["varphi_norm"], tau, rtol=1e-10)


def test_critical_points_of_x1x2(product):
    cps = geo.find_critical_points(product, geo.ball_region((0, 0, 0), 0.5))
    X = np.array([c.x for c in cps])
    assert len(X) > 10
    assert np.abs(X[:, :2]).max() < 1e-9
    assert X[:, 2].min() < -0.4 and X[:, 2].max() > 0.4


def test_two_point_ratios(product):
    along = geo.two_point_turning(product, (0, 0, 0), (0, 0, 0.3), 2)["ratio"]
    across = geo.two_point_turning(product, (0, 0, 0), (0.3, 0, 0), 2)["ratio"]
    assert along < 1e-8
    assert_allclose(across, np.sqrt(5), rtol=1e-8)


def test_minimal_radius_of_pure_degree():
    u = lambda x: x[..., 0] * x[..., 1]  # noqa: E731
    rec = geo.minimal_radius(u, (0, 0, 0.1), 2, 1 / 64, eps=1 / 32, eps0=1 / 32, n_samples=8, s_min=1e-2)
    assert rec.r0 == 0.0
    assert rec.r_star == 1.0
    assert_allclose(rec.n_star, 2.0, atol=1e-12)


def test_minimal_radius_sees_low_degree_mass():
    # x1 + x1 x2 / 100 has N* near 1 at every scale below 1
    u = lambda x: x[..., 0] + 0.01 * x[..., 0] * x[..., 1]  # noqa: E731
    rec = geo.minimal_radius(u, (0, 0, 0), 2, 1 / 64, eps=1 / 64, eps0=1 / 32, n_samples=8, s_min=1e-2)
    assert rec.r0 == 1.0


def test_tube_segment_closed_form():
    S = np.array([[[0, 0, -0.5], [0, 0, 0.5]]])
    r = 0.1
    v, se = geo.tube_volume(S, r, samples=200_000, seed=1)
    exact = np.pi * r * r + 4 / 3 * np.pi * r ** 3
    assert abs(v - exact) <= 3 * se


def test_tube_single_point():
    v, se = geo.tube_volume(np.zeros((1, 3)), 0.1, samples=200_000, seed=2)
    assert abs(v - 4 / 3 * np.pi * 1e-3) <= 3 * se


def test_tube_empty_and_monotone():
    assert geo.tube_volume(np.zeros((0, 3)), 0.1) == (0.0, 0.0)
    S = np.array([[[0, 0, 0], [0.3, 0.2, 0.1]]])
    rows = geo.tube_sweep(S, [0.05, 0.1, 0.2], samples=50_000)
    for a, b in zip(rows, rows[1:]):
        assert b[1] >= a[1] - 3 * np.hypot(a[2], b[2])


def test_lipschitz_graph():
    z = np.linspace(0, 1, 6)
    line = np.stack([0 * z, 0 * z, z], axis=1)
    assert geo.lipschitz_graph_check(line, [[0, 0, 1]], 0.1)["ratio"] < 1e-15
    s = 1 / 9
    tilted = np.stack([s * z, 0 * z, z], axis=1)
    res = geo.lipschitz_graph_check(tilted, [[0, 0, 1]], 0.12)
    assert_allclose(res["ratio"], s / np.sqrt(1 + s * s), rtol=1e-12)
    assert res["pass"]
    bad = geo.lipschitz_graph_check([[0, 0, 0], [1, 0, 0]], [[0, 0, 1]], 0.1)
    assert not bad["pass"] and abs(bad["ratio"] - 1) < 1e-15


def test_lipschitz_needs_two_centers():
    with pytest.raises(ValidationError):
        geo.lipschitz_graph_check([[0, 0, 0]], [[0, 0, 1]], 0.1)


def _records(points, r_star):
    return [geo.MinimalRadiusRecord(np.asarray(x), 0.0, r, 2, 1 / 64, np.zeros(1), np.zeros(1))
            for x, r in zip(points, r_star)]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(5, 60))
def test_cover_invariants(seed, k):
    rs = np.random.default_rng(seed)
    pts = rs.uniform(-0.5, 0.5, size=(k, 3))
    r_star = rs.choice([0.05, 0.1, 0.4], size=k)
    cov = geo.build_cover(None, pts, 2, 1 / 64, 1 / 32, 1 / 32, records=_records(pts, r_star))
    assert cov.disjoint and cov.contained
    sel = cov.centers[cov.selected]
    rad = cov.radii[cov.selected] / 20
    for i in range(len(sel)):
        for j in range(i + 1, len(sel)):
            assert np.linalg.norm(sel[i] - sel[j]) >= rad[i] + rad[j] - 1e-12
    balls = [(c, r / 4) for c, r in zip(sel, cov.radii[cov.selected])]
    balls += [(c, t / 4) for c, t in zip(cov.secondary_centers, cov.secondary_radii)]
    for p in pts:
        assert any(np.linalg.norm(p - c) < r for c, r in balls)


def test_chain_cover_account():
    # equal balls along a unit segment: disjoint r/20-balls every r/10 cover every point at r/4
    z = np.linspace(-0.5, 0.5, 101)
    pts = np.stack([0 * z, 0 * z, z], axis=1)
    r = 0.5
    cov = geo.build_cover(None, pts, 2, 1 / 64, 1 / 64, 1 / 32, records=_records(pts, [r] * len(pts)))
    assert cov.disjoint and cov.contained
    assert len(cov.secondary_radii) == 0
    # selected centres are at least r/10 apart, so at most 1 / (r/10) + 1 of them
    assert len(cov.selected) <= int(1 / (r / 10)) + 1
    assert_allclose(cov.account, r * len(cov.selected))


def test_cover_csv(tmp_path):
    pts = np.array([[0, 0, 0.0], [0, 0, 0.3]])
    cov = geo.build_cover(None, pts, 2, 1 / 64, 1 / 32, 1 / 32, records=_records(pts, [1.0, 1.0]))
    p = tmp_path / "c.csv"
    geo.write_cover_csv(cov, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "x,y,z,r,label"
    assert lines[1].endswith(",good")


def test_no_critical_zone_x1x2(product):
    res = geo.no_critical_zone_check(product, (0, 0, 0), [[0, 0, 1]], r_inner=1 / 64, n_samples=500)
    assert res["pass"]
    # |grad x1x2| = distance to the x3-axis, and the zone keeps that >= gamma * r_inner
    d = np.linalg.norm(res["argmin"][:2])
    assert_allclose(res["min_grad"], d, rtol=1e-6)
    assert res["min_grad"] > 0
