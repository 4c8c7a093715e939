import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy.integrate import quad

from homcrit.cell import (constant_field, field_from_csv, field_to_csv, flux_average, homogenized_matrix,
                          identity_field, layered_field, min_det_check, normalization_transform,
                          solve_cell_problem, trig_tensor_field)
from homcrit.errors import ValidationError


def harmonic_mean_1d(a):
    # independent oracle: 1 / <1/a> by adaptive quadrature
    return 1.0 / quad(lambda t: 1.0 / a(t), 0.0, 1.0, epsabs=1e-14)[0]


@pytest.mark.parametrize("mean,amp,axis", [(2.0, 1.0, 0), (3.0, 0.5, 2)])
def test_layered_closed_form(mean, amp, axis):
    A = layered_field(128, mean=mean, amplitude=amp, axis=axis)
    C = solve_cell_problem(A)
    want = np.full(3, mean)
    want[axis] = harmonic_mean_1d(lambda t: mean + amp * np.sin(2 * np.pi * t))
    assert_allclose(homogenized_matrix(A, C), np.diag(want), atol=1e-10)


def test_layered_mu():
    C = solve_cell_problem(layered_field(256))
    assert abs(min_det_check(C)["mu"] - np.sqrt(3) / 3) <= 1e-4


def test_identity_mu_exact():
    C = solve_cell_problem(identity_field())
    res = min_det_check(C)
    assert res["mu"] == 1.0
    assert not res["violation"]


def test_flux_matches_energy():
    A = trig_tensor_field(8)
    C = solve_cell_problem(A)
    assert_allclose(flux_average(A, C), homogenized_matrix(A, C), atol=1e-6)


def test_trig_tensor_effective_matrix_is_spd():
    A = trig_tensor_field(8)
    ah = homogenized_matrix(A, solve_cell_problem(A))
    assert_allclose(ah, ah.T, atol=1e-8)
    assert np.linalg.eigvalsh(ah).min() > 0


@settings(max_examples=10, deadline=None)
@given(st.lists(st.floats(-0.4, 0.4), min_size=6, max_size=6))
def test_constant_field_is_its_own_homogenization(off):
    L = np.eye(3) + np.array([[0, 0, 0], [off[0], 0, 0], [off[1], off[2], 0]])
    A0 = L @ L.T + np.diag(np.abs(off[3:]))
    A = constant_field(A0)
    assert_allclose(homogenized_matrix(A, solve_cell_problem(A)), A0, atol=1e-12)


def test_normalization_transform():
    ah = np.array([[2.0, 0.3, 0.0], [0.1, 1.5, 0.2], [0.0, 0.2, 1.0]])
    T = normalization_transform(ah)
    assert_allclose(T.S @ (ah + ah.T) @ T.S.T, 2 * np.eye(3), atol=1e-12)
    assert_allclose(T.S @ T.S_inv, np.eye(3), atol=1e-12)


def test_normalization_rejects_indefinite():
    with pytest.raises(ValidationError):
        normalization_transform(-np.eye(3))


def test_layered_rejects_degenerate_amplitude():
    with pytest.raises(ValidationError):
        layered_field(16, mean=1.0, amplitude=1.0)


def test_csv_roundtrip(tmp_path):
    A = trig_tensor_field(4)
    p = tmp_path / "a.csv"
    field_to_csv(A, p)
    B = field_from_csv(p)
    assert_allclose(B.values, A.values, rtol=1e-11)
    text = p.read_bytes()
    assert b"\r\n" not in text
