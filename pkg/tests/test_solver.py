import numpy as np
import pytest
from numpy.testing import assert_allclose

from homcrit.cell import layered_field
from homcrit.errors import ResolutionError, ValidationError
from homcrit.solver import (BallProblem, boundary_from_preset, harmonic_approximant, required_intervals,
                            solve_dirichlet, solve_harmonic)

rng = np.random.default_rng(3)


def interior_points(k, rmax):
    x = rng.normal(size=(k, 3))
    x /= np.linalg.norm(x, axis=1)[:, None]
    return x * rmax * rng.random((k, 1)) ** (1 / 3)


@pytest.fixture(scope="module")
def product_solution():
    return solve_harmonic(BallProblem((0, 0, 0), 1.0, boundary_from_preset("product")), n=32)


def test_quadratic_harmonic_reproduced(product_solution):
    x = interior_points(50, 0.8)
    assert_allclose(product_solution.value(x), x[:, 0] * x[:, 1], atol=1e-8)
    g = product_solution.gradient(x)
    assert_allclose(g, np.stack([x[:, 1], x[:, 0], 0 * x[:, 0]], axis=1), atol=1e-7)


def test_backends_agree_for_laplacian():
    pb = BallProblem((0, 0, 0), 1.0, boundary_from_preset("cubic"))
    a = solve_dirichlet(pb, n=32, method="cartesian")
    b = solve_dirichlet(pb, n=32, method="axisymmetric")
    x = interior_points(30, 0.7)
    exact = x[:, 0] ** 3 - 3 * x[:, 0] * x[:, 1] ** 2
    assert_allclose(a.value(x), exact, atol=1e-7)
    assert_allclose(b.value(x), exact, atol=1e-6)


def test_guard_reports_required_resolution():
    pb = BallProblem((0, 0, 0), 1.0, boundary_from_preset("product"), epsilon=1 / 16,
                     coefficients=layered_field(32))
    with pytest.raises(ResolutionError) as info:
        solve_dirichlet(pb, n=64)
    # h <= eps/16 on a diameter of 2 means 2 * 16 * 16 intervals
    assert info.value.required_n == 512
    assert required_intervals(1.0, 1 / 16) == 512


def test_oscillating_problem_needs_epsilon():
    with pytest.raises(ValidationError):
        BallProblem((0, 0, 0), 1.0, boundary_from_preset("product"), coefficients=layered_field(8))


@pytest.mark.parametrize("spec", ["hp:1,3", "mix:", "nonsense", "linear:4"])
def test_bad_boundary_presets(spec):
    with pytest.raises((ValidationError, ValueError)):
        boundary_from_preset(spec)


def test_hp_preset_is_normalized_harmonic():
    b = boundary_from_preset("hp:2,0")
    x = interior_points(400, 1.0)
    x /= np.linalg.norm(x, axis=1)[:, None]
    v = b(x)
    # zonal degree-2 harmonic: proportional to 3 z^2 - 1
    ratio = v / (3 * x[:, 2] ** 2 - 1)
    assert_allclose(ratio, ratio[0], rtol=1e-10)
    assert_allclose(abs(ratio[0]), np.sqrt(5) / 2, rtol=1e-12)


def test_layered_approximant_shrinks_with_eps():
    A = layered_field(64)
    errs = []
    for eps in (1 / 8, 1 / 16):
        pb = BallProblem((0, 0, 0), 1.0, boundary_from_preset("product"), epsilon=eps, coefficients=A)
        ha = harmonic_approximant(solve_dirichlet(pb))
        errs.append(ha.rel_sup)
    assert errs[1] < errs[0] < 0.2


def test_export_csv(tmp_path, product_solution):
    p = tmp_path / "u.csv"
    product_solution.export_csv(p, spacing=0.25)
    lines = p.read_bytes().split(b"\n")
    assert lines[0] == b"i,j,k,x,y,z,u,ux,uy,uz"
    row = [float(v) for v in lines[1].split(b",")[3:]]
    assert_allclose(row[3], row[0] * row[1], atol=1e-8)
