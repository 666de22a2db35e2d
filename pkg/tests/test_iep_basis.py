import numpy as np
import pytest

from ep_spectra.errors import DegenerateSpectrum
from ep_spectra.ic_spectral import convergence_study
from ep_spectra.iep_basis import (
    assemble_chain_basis,
    basis_diagnostics,
    chain_coefficients,
    iep_canonical_form,
)
from ep_spectra.numerics import eig_biorthogonal
from oracles import chain_coefficients_by_hand


def test_single_substitution():
    c = chain_coefficients([0.0, 2.0], 0, 1)
    assert c[1, 0] == -0.5


def test_equidistant_hand_recursion():
    c = chain_coefficients(np.arange(6.0), 0, 2)
    assert c[1, 0] == -1 and c[2, 0] == 0.5 and c[2, 1] == -1


def test_p_max_zero():
    assert np.array_equal(chain_coefficients([3.0], 0, 0), [[1.0]])


def test_matches_loop_oracle(rng):
    E = np.sort(rng.uniform(0, 40, 14)) + 1j * rng.uniform(-1, 1, 14)
    assert np.allclose(chain_coefficients(E, 3, 9), chain_coefficients_by_hand(E, 3, 9), rtol=1e-14, atol=0)


def test_one_step_relation(rng):
    E = rng.uniform(0, 10, 8)
    c = chain_coefficients(E, 1, 5)
    for k in range(1, 6):
        assert c[k, k - 1] == pytest.approx(c[k - 1, k - 1] / (E[1 + k - 1] - E[1 + k]))
    assert np.all(np.triu(c, 1) == 0)


@pytest.mark.parametrize("s", [0.5, 3.0, -2.0, 1j])
def test_scale_covariance(s, rng):
    E = np.sort(rng.uniform(0, 20, 10)).astype(complex)
    c, cs = chain_coefficients(E, 1, 7), chain_coefficients(s * E, 1, 7)
    k, m = np.indices(c.shape)
    mask = k >= m
    ratio = np.where(mask, c * s ** (-(k - m).astype(float)), 0)
    assert np.abs(cs - ratio).max() <= 1e-12 * np.abs(c).max()


def test_degenerate_spectrum():
    with pytest.raises(DegenerateSpectrum):
        chain_coefficients([0.0, 1.0, 1.0 + 1e-12], 0, 2)
    with pytest.raises(ValueError):
        chain_coefficients([0.0, 1.0], 0, 3)


def test_canonical_form():
    J = iep_canonical_form([1, 2, 3, 4, 5], 2, 2)
    assert np.array_equal(np.diag(J), [1, 2, 3, 4, 5])
    assert np.array_equal(np.diag(J, 1), [0, 0, 1, 1])


def test_p_max_zero_is_spectral_decomposition():
    sd = eig_biorthogonal(np.diag([0.0, 3.0, 7.0, 12.0]))
    cb = assemble_chain_basis(sd, 2, 0)
    assert np.allclose(np.abs(cb.R), np.eye(4)[:, :3])
    assert np.count_nonzero(np.diag(cb.J_iep, 1)) == 0
    d = basis_diagnostics(cb, sd)
    assert d.sigma_min_chain > 0.9 and d.sigma_min_eig > 0.9


def test_diagonal_input_closed_form():
    E = np.array([0.0, 3.0, 7.0, 12.0, 18.0, 25.0])
    sd = eig_biorthogonal(np.diag(E))
    cb = assemble_chain_basis(sd, 1, 3, phase="positive")
    for p in range(4):
        col = cb.R[:, 1 + p]
        support = np.flatnonzero(np.abs(col) > 1e-10)
        assert list(support) == list(range(1, 2 + p))
        assert np.linalg.norm(col) == pytest.approx(1.0)
        assert abs(col[1 + p].imag) < 1e-15 and col[1 + p].real > 0
    assert cb.recurrence_residuals.max() <= 1e-12
    assert cb.unit_norm.all()


def test_unit_gap_falls_back_to_equal_weights():
    sd = eig_biorthogonal(np.diag(np.arange(6.0)))
    cb = assemble_chain_basis(sd, 0, 3)
    assert not cb.unit_norm.all()
    assert cb.recurrence_residuals.max() <= 1e-12


def test_single_column_bases():
    sd = eig_biorthogonal(np.diag([1.0, 2.0]))
    cb = assemble_chain_basis(sd, 0, 0)
    d = basis_diagnostics(cb, sd)
    assert d.sigma_min_chain == pytest.approx(1.0) and d.sigma_min_eig == pytest.approx(1.0)


@pytest.fixture(scope="module")
def cubic_window():
    table = convergence_study(1, [128, 256])
    return table.spectra[0].select(np.flatnonzero(table.converged))


def test_cubic_chain_residuals(cubic_window):
    cb = assemble_chain_basis(cubic_window, 4, 8)
    assert cb.recurrence_residuals[:-1].max() <= 1e-6
    assert cb.similarity_residual <= 1e-6
    np.testing.assert_allclose(np.linalg.norm(cb.R, axis=0), 1.0, rtol=1e-12)


def test_cubic_support_is_triangular(cubic_window):
    cb = assemble_chain_basis(cubic_window, 4, 6)
    coeffs = np.linalg.lstsq(np.asarray(cubic_window.right_vectors), cb.R, rcond=None)[0]
    for p in range(7):
        outside = np.delete(coeffs[:, 4 + p], range(4, 5 + p))
        assert np.abs(outside).max() <= 1e-10 * np.abs(coeffs[:, 4 + p]).max() or np.abs(outside).max() <= 1e-6


def test_cubic_conditioning_gain(cubic_window):
    cb = assemble_chain_basis(cubic_window, 4, 8)
    d = basis_diagnostics(cb, cubic_window)
    assert d.sigma_min_chain > d.sigma_min_eig
