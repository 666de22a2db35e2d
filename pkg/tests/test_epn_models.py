import numpy as np
import pytest

from ep_spectra.epn_models import (
    EPNModel,
    chain_hamiltonian,
    ep_sweep,
    jordan_block,
    transition_matrix,
    uniform_ep_direction,
    verify_jordan_form,
)
from ep_spectra.errors import ChainBreakdown, NoCoalescence, NotAnEP, SingularMatrix
from oracles import two_level_gap


def test_jordan_block_examples():
    assert np.array_equal(jordan_block(1, 5), [[5]])
    assert np.array_equal(jordan_block(2, 0), [[0, 1], [0, 0]])
    e = 2 + 1j
    assert np.array_equal(jordan_block(3, e), [[e, 1, 0], [0, e, 1], [0, 0, e]])
    with pytest.raises(ValueError):
        jordan_block(0)


def test_chain_hamiltonian_examples():
    H = chain_hamiltonian(EPNModel(1, (1.0,), t=0.3))
    assert np.allclose(H, [[1, 0.3], [-0.3, -1]])
    assert np.allclose(chain_hamiltonian(EPNModel(2, (1.0, 1.0), t=0)), np.diag([3, 1, -1, -3]))
    H = chain_hamiltonian(EPNModel(2, (2.0, 5.0), t=1.0))
    assert np.allclose(np.diag(H, 1), [2, 5, 2])
    assert np.allclose(np.diag(H, -1), [-2, -5, -2])


@pytest.mark.parametrize("J", [1, 2, 3, 4])
def test_chain_structure_invariants(J, rng):
    model = EPNModel(J, tuple(rng.uniform(0, 2, J)), t=rng.uniform(0, 1))
    H = chain_hamiltonian(model)
    assert np.allclose(H.imag, 0)
    assert np.allclose(H + H.T, 2 * np.diag(np.diag(H)))


@pytest.mark.parametrize("J", [1, 2, 3])
def test_spectral_antisymmetry_below_ep(J):
    model = EPNModel(J, uniform_ep_direction(J))
    for t in np.linspace(0, 0.9, 7):
        w = np.sort(np.linalg.eigvals(chain_hamiltonian(model.at(t))).real)
        assert np.abs(w + w[::-1]).max() <= 1e-8


def test_model_validation():
    with pytest.raises(ValueError):
        EPNModel(2, (1.0,))
    with pytest.raises(ValueError):
        EPNModel(1, (-1.0,))
    with pytest.raises(ValueError):
        EPNModel(0, ())


def test_two_level_sweep_against_closed_form():
    model = EPNModel(1, (1.0,))
    grid = [0.0, 0.5, 0.999]
    rep = ep_sweep(model, grid)
    assert np.allclose(rep.max_gap, [two_level_gap(t) for t in grid], atol=1e-12)
    assert rep.located_ep.t_ep == pytest.approx(1.0, abs=1e-10)
    assert abs(rep.located_ep.E_ep) < 1e-12
    assert model.located_ep is rep.located_ep


def test_t_zero_orthogonal_eigenvectors():
    rep = ep_sweep(EPNModel(1, (1.0,)), [0.0, 0.5, 0.99])
    assert rep.max_overlap[0] < 1e-12
    assert rep.max_overlap[-1] > rep.max_overlap[0]


def test_square_root_unfolding():
    model = EPNModel(1, (1.0,))
    t_ep = ep_sweep(model, np.linspace(0, 0.999, 50)).located_ep.t_ep
    s = np.geomspace(1e-6, 1e-2, 9)
    gaps = np.array([np.ptp(np.linalg.eigvals(chain_hamiltonian(model.at(t_ep - x))).real) for x in s])
    ratio = gaps / np.sqrt(s)
    assert ratio.max() / ratio.min() - 1 < 0.05


def test_j2_brute_force_direction_search():
    # oracle 1: coarse 2-parameter scan of couplings (b, a) for the smallest spectral radius
    grid = np.linspace(0.0, 3.0, 61)
    rad = np.array(
        [[np.abs(np.linalg.eigvals(chain_hamiltonian(EPNModel(2, (b, a), 1.0)))).max() for a in grid] for b in grid]
    )
    ib, ia = np.unravel_index(np.argmin(rad), rad.shape)
    b0, a0 = grid[ib], grid[ia]
    # oracle 2: both nontrivial characteristic-polynomial coefficients vanish,
    # a^2 + 2 b^2 = 10 and b^4 + 6 b^2 - 9 a^2 + 9 = 0, so b^2 = 3 and a = 2
    b_exact, a_exact = np.sqrt(3.0), 2.0
    assert abs(b0 - b_exact) <= 0.1 and abs(a0 - a_exact) <= 0.1
    model = EPNModel(2, (b_exact / 2, 1.0))
    rep = ep_sweep(model, np.linspace(0, 3, 121))
    assert rep.located_ep.t_ep == pytest.approx(2.0, rel=1e-8)
    assert abs(rep.located_ep.E_ep) < 1e-12
    assert rep.located_ep.gap_at_ep <= rep.coalescence_tolerance


def test_sweep_parallel_matches_serial():
    model = EPNModel(2, uniform_ep_direction(2))
    grid = np.linspace(0, 1.1, 23)
    a = ep_sweep(model, grid, workers=1)
    b = ep_sweep(model, grid, workers=4)
    assert np.array_equal(a.max_gap, b.max_gap)
    assert a.located_ep == b.located_ep


def test_no_coalescence_on_generic_ray():
    with pytest.raises(NoCoalescence):
        ep_sweep(EPNModel(2, (1.0, 1.0)), np.linspace(0, 3, 31))


def test_sweep_rejects_bad_grid():
    with pytest.raises(ValueError):
        ep_sweep(EPNModel(1, (1.0,)), [])
    with pytest.raises(ValueError):
        ep_sweep(EPNModel(1, (1.0,)), [0.5, 0.1])


def test_transition_matrix_two_by_two():
    H = np.array([[1, 1], [-1, -1]])
    tm = transition_matrix(H, 0)
    R = tm.R
    assert np.allclose(R[:, 0], np.array([1, -1]) / np.sqrt(2))
    assert np.allclose(R[:, 1], np.array([1, 1]) / (2 * np.sqrt(2)))
    assert abs(np.vdot(R[:, 0], R[:, 1])) < 1e-15
    assert np.allclose(H @ R[:, 1], R[:, 0])
    assert tm.similarity_residual <= 1e-14
    # the hand-built chain from the defining relation also works
    assert verify_jordan_form(H, [[1, 1], [-1, 0]], [[0, 1], [0, 0]]) <= 1e-14


def test_transition_matrix_of_jordan_block_is_identity():
    tm = transition_matrix(jordan_block(4, 0), 0)
    assert np.allclose(tm.R, np.eye(4))


@pytest.mark.parametrize("J", [1, 2, 3])
def test_chain_property_at_located_ep(J):
    model = EPNModel(J, uniform_ep_direction(J))
    ep = ep_sweep(model, np.linspace(0, 1.2, 25)).located_ep
    H = chain_hamiltonian(model.at(ep.t_ep))
    tm = transition_matrix(H, ep.E_ep)
    A = H - ep.E_ep * np.eye(2 * J)
    D = A @ tm.R
    scale = np.linalg.norm(H, 2)
    assert np.linalg.norm(D[:, 0]) <= 1e-8 * scale
    assert np.linalg.norm(D[:, 1:] - tm.R[:, :-1]) <= 1e-8 * scale
    assert tm.similarity_residual <= 1e-8
    assert np.isfinite(tm.inverse_condition)


def test_not_an_ep():
    with pytest.raises(NotAnEP):
        transition_matrix(np.eye(3), 1.0)
    with pytest.raises(NotAnEP):
        transition_matrix(np.diag([1.0, 2.0]), 3.0)


def test_chain_breakdown():
    with pytest.raises(ChainBreakdown):
        transition_matrix(np.diag([1.0, 2.0]), 1.0)


def test_verify_jordan_form_examples():
    J3 = jordan_block(3, 0)
    assert verify_jordan_form(J3, np.eye(3), J3) == 0
    assert verify_jordan_form(np.diag([1.0, 2.0]), np.eye(2), jordan_block(2, 1)) >= 0.4
    with pytest.raises(SingularMatrix):
        verify_jordan_form(np.eye(2), np.zeros((2, 2)), np.eye(2))
