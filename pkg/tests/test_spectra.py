import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from homcrit import spectra as sp
from homcrit.errors import DegenerateInputError, ValidationError

# u = a x1 + b x1 x2 on spheres of radius r:
#   mean of (u - u(0))^2 = a^2 r^2 / 3 + b^2 r^4 / 15
#   r int |grad u|^2 / int (u - u(0))^2 = (a^2 r^2 / 3 + 2 b^2 r^4 / 15) / (same masses)


def mixture(a, b):
    return lambda x: a * x[..., 0] + b * x[..., 0] * x[..., 1]


def mass(a, b, r):
    return a * a * r * r / 3 + b * b * r ** 4 / 15


def test_doubling_of_polynomial_mixture():
    a, b = 0.7, 1.9
    f = mixture(a, b)
    want = np.log(mass(a, b, 1.0) / mass(a, b, 0.5)) / np.log(4)
    rec = sp.doubling_index(f, np.zeros(3), 1.0)
    assert_allclose(rec.N_star, want, rtol=1e-12)


def test_spectral_route_matches_sampling():
    a, b = 0.7, 1.9
    e = sp.decompose(sp.sphere_trace(mixture(a, b), np.zeros(3), 1.0), 4)
    want_N = (a * a / 3 + 2 * b * b / 15) / mass(a, b, 1.0)
    assert_allclose(sp.spectral_frequency(e, 1.0), want_N, rtol=1e-12)
    assert_allclose(e.degree_energy()[:3], [0, a * a / 3, b * b / 15], atol=1e-14)


def test_decompose_needs_enough_quadrature():
    tr = sp.sphere_trace(mixture(1, 1), np.zeros(3), 1.0, q=4)
    with pytest.raises(ValidationError):
        sp.decompose(tr, 8)


def test_constant_function_is_degenerate():
    with pytest.raises(DegenerateInputError):
        sp.doubling_index(lambda x: np.ones(x.shape[:-1]), np.zeros(3), 1.0)


energies = st.lists(st.floats(0.0, 1.0), min_size=9, max_size=9).filter(lambda v: sum(v[1:]) > 1e-3)


@settings(max_examples=60, deadline=None)
@given(energies, st.floats(0.05, 1.0))
def test_sandwich(A, t):
    A = np.array(A)
    ns = sp.spectral_doubling(A, t)
    assert sp.spectral_frequency(A, t / 2) - 1e-12 <= ns <= sp.spectral_frequency(A, t) + 1e-12


@settings(max_examples=60, deadline=None)
@given(energies, st.floats(0.0, 3.0))
def test_weiss_nondecreasing(A, kappa):
    e = sp.expansion_from_degrees(A)
    W = sp.weiss_functional(e, kappa, np.linspace(0.25, 1.0, 32))
    assert np.diff(W).min() >= -1e-10


@settings(max_examples=60, deadline=None)
@given(energies)
def test_weiss_identity(A):
    c = sp.weiss_identity_check(sp.expansion_from_degrees(A))
    assert c["gap"] <= 1e-10


@settings(max_examples=40, deadline=None)
@given(energies, st.sampled_from([1 / 64, 1 / 8, 1 / 2]), st.integers(1, 8))
def test_frequency_drop(A, delta, ell):
    A = np.array(A)
    c = sp.frequency_drop_check(A, ell, delta)
    if c["hypothesis"]:
        assert c["slack"] >= -1e-12


def test_shift_invariance():
    f = mixture(0.3, 1.0)
    g = lambda x: f(x) + 5.0  # noqa: E731
    x0 = np.array([0.1, -0.2, 0.05])
    assert_allclose(sp.doubling_index(g, x0, 0.5).N_star, sp.doubling_index(f, x0, 0.5).N_star, rtol=1e-10)


def test_weiss_closed_form():
    # pure degree 2 with unit energy: W_kappa(r) = (2 - kappa) r^(4 - 2 kappa)
    e = sp.expansion_from_degrees([0, 0, 1.0])
    r = np.array([0.3, 0.6, 1.0])
    assert_allclose(sp.weiss_functional(e, 1.5, r), 0.5 * r, rtol=1e-13)


def test_turning_of_pure_harmonic_is_zero():
    e = sp.expansion_from_degrees([0, 0, 1.0], seed=1)
    assert sp.spectral_turning(e, 2) <= 1e-15
    f = e.evaluate
    assert sp.turning_distance(f, np.zeros(3), 2, 0.25, 1.0) <= 1e-12


def test_corpus_is_seeded():
    a = sp.spectral_corpus(seed=7, size=10)
    b = sp.spectral_corpus(seed=7, size=10)
    for x, y in zip(a, b):
        assert np.array_equal(x.coeffs, y.coeffs)


def test_csv_writers(tmp_path):
    e = sp.expansion_from_degrees([0, 1.0, 0.5], seed=2)
    p = tmp_path / "e.csv"
    sp.write_expansion_csv(e, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "l,m,a"
    assert len(lines) == 1 + 9
    q = tmp_path / "f.csv"
    sp.write_frequency_csv(sp.frequency_sweep(e, np.zeros(3), [0.5, 1.0], kappa=1.0), q)
    assert q.read_text().splitlines()[0] == "r,Nstar,N,Wkappa"
