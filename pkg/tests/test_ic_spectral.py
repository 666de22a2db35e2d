import numpy as np
import pytest

from ep_spectra.epn_models import jordan_block
from ep_spectra.errors import InsufficientConvergence
from ep_spectra.ic_spectral import (
    OscillatorSpec,
    build_bb_matrix,
    convergence_study,
    exact_bb_matrix,
    ladder_operators,
    match_levels,
    metric_operator,
    parallelization_diagnostics,
    pt_residual,
)
from ep_spectra.numerics import eig_biorthogonal
from oracles import cubic_ground_energy_fd, ladder_x


def test_spec_validation():
    with pytest.raises(ValueError):
        OscillatorSpec(2, 16)
    with pytest.raises(ValueError):
        OscillatorSpec(1, 3)
    assert OscillatorSpec(0, 8).frequency == 1.0


def test_ladder_matrix_elements():
    x, _ = ladder_operators(6)
    assert x[0, 1] == pytest.approx(1 / np.sqrt(2))
    assert np.allclose(x, ladder_x(6))


def test_harmonic_matrix_is_diagonal_odd_integers():
    M = 12
    H = build_bb_matrix(OscillatorSpec(0, M))
    lead = H[: M - 2, : M - 2]
    assert np.allclose(lead, np.diag(2 * np.arange(M - 2) + 1.0))
    # truncation artifacts stay in the last two rows and columns
    assert np.allclose(H[: M - 2, M - 2 :], 0) and np.allclose(H[M - 2 :, : M - 2], 0)


def test_cubic_matrix_is_real_plus_imaginary_symmetric():
    H = build_bb_matrix(OscillatorSpec(1, 20))
    D, X = H.real, H.imag
    assert np.allclose(D, D.T) and np.allclose(X, X.T)


@pytest.mark.parametrize("delta", [0, 1])
@pytest.mark.parametrize("M", [8, 33, 64])
def test_pt_residual_small(delta, M):
    assert pt_residual(build_bb_matrix(OscillatorSpec(delta, M))) <= 1e-12


def test_pt_residual_of_jordan_block_positive():
    assert pt_residual(jordan_block(2, 0)) > 0.5


def test_exact_matrix_agrees_away_from_edge():
    H = build_bb_matrix(OscillatorSpec(1, 40))
    E = exact_bb_matrix(1, 40)
    assert np.allclose(H[:37, :37], E[:37, :37])
    assert not np.allclose(H, E)


def test_ground_energy_matches_finite_differences():
    table = convergence_study(1, [32, 64])
    assert abs(table.converged_levels[0] - cubic_ground_energy_fd()) <= 1e-3


def test_harmonic_convergence_study():
    # odd size: the truncated corner entry M - 1 is even and cannot mimic a level
    table = convergence_study(0, [17, 33])
    levels = table.converged_levels
    assert np.allclose(levels, 2 * np.arange(len(levels)) + 1, atol=1e-8)
    assert len(levels) == 16


def test_cubic_convergence_three_sizes():
    table = convergence_study(1, [32, 64, 128])
    assert table.converged_count >= 8
    assert np.abs(table.converged_levels.imag).max() <= 1e-6


def test_single_size_has_no_converged_levels():
    table = convergence_study(1, [32])
    assert table.converged_count == 0


def test_study_rejects_unsorted():
    with pytest.raises(ValueError):
        convergence_study(1, [64, 32])


def test_match_levels_uses_nearest_neighbour():
    coarse = np.array([1.0, 5 + 300j, 3.0])
    fine = np.array([0.5 + 900j, 1.0, 3.0 + 1e-9])
    assert list(match_levels(coarse, fine)) == [True, False, True]


def test_hermitian_control_diagnostics():
    table = convergence_study(0, [32, 64])
    rep = parallelization_diagnostics(table.spectra[0], None, table.spectra[1])
    assert rep.overlaps_right.max() <= 1e-8
    assert np.abs(rep.kappa - 1).max() <= 1e-8


def test_cubic_diagnostics_increase():
    table = convergence_study(1, [64, 128])
    rep = parallelization_diagnostics(table.spectra[0], None, table.spectra[1])
    assert np.all(np.diff(rep.overlaps_right) > 0)
    assert np.all(np.diff(rep.kappa) > 0)
    assert np.all((rep.overlaps_right >= 0) & (rep.overlaps_right <= 1))
    assert np.all(rep.kappa >= 1 - 1e-12)


def test_single_level_gives_empty_report():
    sd = eig_biorthogonal([[2.0]])
    rep = parallelization_diagnostics(sd, 0, sd)
    assert rep.overlaps_right.size == 0
    assert rep.kappa == pytest.approx([1.0])


def test_insufficient_convergence():
    sd = eig_biorthogonal(np.diag([1.0, 2.0, 3.0, 4.0]))
    ref = eig_biorthogonal(np.diag([1.0, 2.5, 3.5, 4.5]))
    with pytest.raises(InsufficientConvergence):
        parallelization_diagnostics(sd, 0, ref)


def test_metric_hermitian_full_rank():
    sd = eig_biorthogonal(build_bb_matrix(OscillatorSpec(0, 10)))
    met = metric_operator(sd, 10)
    assert np.allclose(met.Theta, np.eye(10))
    assert met.quasi_hermiticity_residual <= 1e-13
    assert met.min_eigenvalue == pytest.approx(1.0)
    assert met.min_eigenvalue_full == pytest.approx(1.0)


def test_metric_rank_one():
    table = convergence_study(1, [32, 64])
    met = metric_operator(table.spectra[0], 1)
    assert met.rank == 1
    assert met.min_eigenvalue_full == 0.0
    assert met.min_eigenvalue > 0
    assert np.abs(met.Theta - met.Theta.conj().T).max() <= 1e-12


def test_metric_against_untruncated_operator():
    table = convergence_study(1, [128, 256])
    sd = table.spectra[0].select(np.flatnonzero(table.converged))
    met = metric_operator(sd, 8, exact_bb_matrix(1, 131))
    assert met.quasi_hermiticity_residual <= 1e-6
    assert met.min_eigenvalue > 0
