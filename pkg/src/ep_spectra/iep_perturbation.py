"""First-order perturbation of the lowest level of a chain canonical form.

With partition index zero the unperturbed operator is the upper bidiagonal
``J`` (energies ``E_0, E_1, ...`` on the diagonal, ones above).  Its lowest
eigenvector is ``e_0``, so the first-order equations
``(J - E_0) psi1 + (V - E1) psi0 = 0`` can be solved by forward
substitution.  The energy correction ``E1`` is left free by the rows
that are kept; it is either prescribed or fixed by demanding that the
component just beyond the truncation vanish.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DegenerateClosure
from .numerics import SpectralData, as_matrix, eig_biorthogonal

DEFAULT_N_TRUNC = 24
TRUNCATION_STUDY = (16, 24, 32)
CLOSURES = ("prescribed_psi1_1", "boundary_zero")
SLOPE_TOL = 1e-14


@dataclass(frozen=True)
class FirstOrderResult:
    E0: complex
    E1: complex
    psi1: np.ndarray
    residual: float
    closure: str
    boundary_value: complex
    consistency_error: float


def _prepare(E, V, psi0_0, N_trunc):
    E = np.asarray(E, dtype=complex)
    if int(N_trunc) != N_trunc or N_trunc < 2:
        raise ValueError(f"N_trunc must be an integer >= 2, got {N_trunc!r}")
    N_trunc = int(N_trunc)
    if len(E) < N_trunc:
        raise ValueError(f"need {N_trunc} energies, got {len(E)}")
    E = E[:N_trunc]
    gaps = np.abs(E[:, None] - E[None, :])
    np.fill_diagonal(gaps, np.inf)
    if gaps.min() == 0:
        raise ValueError("energies must be pairwise distinct")
    V = as_matrix(V)
    if V.shape[0] < N_trunc:
        raise ValueError(f"V must be at least {N_trunc} x {N_trunc}")
    V = V[:N_trunc, :N_trunc]
    psi0_0 = complex(psi0_0)
    if psi0_0 == 0:
        raise ValueError("psi0_0 must be nonzero")
    return E, V, psi0_0, N_trunc


def chain_form(E: Sequence[complex], N_trunc: int) -> np.ndarray:
    """Upper bidiagonal ``N_trunc x N_trunc`` matrix: energies on the diagonal, ones above."""
    E = np.asarray(E, dtype=complex)[:N_trunc]
    return np.diag(E) + np.eye(len(E), k=1)


def _propagate(E, V, psi0_0, start):
    """Components ``psi_1 .. psi_N`` of the first-order vector from ``psi_1 = start``.

    Entry ``N`` (one past the truncation) is the overflow that the closure
    condition sets to zero.
    """
    N = len(E)
    psi = np.zeros(N + 1, dtype=complex)
    psi[1] = start
    for j in range(1, N):
        psi[j + 1] = (E[0] - E[j]) * psi[j] - V[j, 0] * psi0_0
    return psi


def first_order_forward(E, V, psi0_0: complex, E1: complex, N_trunc: int = DEFAULT_N_TRUNC,
                        closure: str = "prescribed_psi1_1") -> FirstOrderResult:
    """Forward substitution for the first-order eigenvector at a given ``E1``.

    ``psi1[0]`` is set to zero (the free normalization direction);
    ``psi1[1] = (E1 - V_00) psi0_0`` and later components follow row by row.
    The residual is the relative norm of the kept equations, rows
    ``0 .. N_trunc - 2``.
    """
    if closure not in CLOSURES:
        raise ValueError(f"closure must be one of {CLOSURES}")
    E, V, psi0_0, N = _prepare(E, V, psi0_0, N_trunc)
    E1 = complex(E1)
    full = _propagate(E, V, psi0_0, (E1 - V[0, 0]) * psi0_0)
    psi1 = full[:N]
    J = chain_form(E, N)
    psi0 = np.zeros(N, dtype=complex)
    psi0[0] = psi0_0
    eq = (J - E[0] * np.eye(N)) @ psi1 + (V - E1 * np.eye(N)) @ psi0
    kept = eq[: N - 1]
    scale = (
        np.linalg.norm(J - E[0] * np.eye(N), 2) * np.linalg.norm(psi1)
        + (np.linalg.norm(V[:, 0]) + abs(E1)) * abs(psi0_0)
    )
    residual = float(np.linalg.norm(kept) / scale) if scale > 0 else float(np.linalg.norm(kept))
    consistency = abs(E1 - (V[0, 0] + psi1[1] / psi0_0)) / max(1.0, abs(E1))
    return FirstOrderResult(
        E0=complex(E[0]),
        E1=E1,
        psi1=psi1,
        residual=residual,
        closure=closure,
        boundary_value=complex(full[N]),
        consistency_error=float(consistency),
    )


def closure_boundary_zero(E, V, psi0_0: complex, N_trunc: int = DEFAULT_N_TRUNC) -> FirstOrderResult:
    """Fix ``E1`` by making the overflow component ``psi_{N_trunc}`` vanish.

    The overflow is affine in ``E1`` with slope
    ``psi0_0 prod_{j=1}^{N-1} (E_0 - E_j)``, so one Newton step from the
    seed ``V_00`` lands on the root.  For diagonal ``V`` the overflow at the
    seed is exactly zero and ``E1 = V_00`` without rounding.  The resulting
    ``E1`` equals the derivative at ``lam = 0`` of the lowest eigenvalue of
    the truncated ``J + lam V``.
    """
    E, V, psi0_0, N = _prepare(E, V, psi0_0, N_trunc)
    slope = psi0_0 * np.prod(E[0] - E[1:N])
    if abs(slope) < SLOPE_TOL:
        raise DegenerateClosure(f"overflow slope {abs(slope):.3e} below {SLOPE_TOL:g}")
    seed = V[0, 0]
    overflow = _propagate(E, V, psi0_0, 0.0)[N]
    E1 = seed - overflow / slope
    return first_order_forward(E, V, psi0_0, E1, N, closure="boundary_zero")


@dataclass(frozen=True)
class DirectReference:
    spectral_data: SpectralData
    unperturbed: np.ndarray
    paired: np.ndarray
    displacements: np.ndarray


def direct_reference(J_iep, V, lam: float) -> DirectReference:
    """Eigen-solve ``J_iep + lam V`` and pair each level with an unperturbed one.

    Pairing minimizes the total ``|E - E_n|`` (assignment problem).  The
    displacement of each paired level is recomputed as a two-sided
    Rayleigh quotient of ``J_iep - E_n + lam V``, which keeps its relative
    accuracy even when the displacement is far below ``u |E_n|``.
    """
    J = as_matrix(J_iep)
    V = as_matrix(V)
    if J.shape != V.shape:
        raise ValueError("J_iep and V must have the same shape")
    lam = float(lam)
    H = J + lam * V
    sd = eig_biorthogonal(H)
    E_un = np.diag(J).copy()
    cost = np.abs(np.asarray(sd.eigenvalues)[:, None] - E_un[None, :])
    rows, cols = linear_sum_assignment(cost)
    order = np.empty(len(E_un), dtype=int)
    order[cols] = rows
    paired = np.asarray(sd.eigenvalues)[order]
    disp = np.empty(len(E_un), dtype=complex)
    n = J.shape[0]
    for k, idx in enumerate(order):
        x = sd.right_vectors[:, idx]
        y = sd.left_vectors[:, idx]
        shifted = H - E_un[k] * np.eye(n)
        denom = np.vdot(y, x)
        disp[k] = np.vdot(y, shifted @ x) / denom if denom != 0 else paired[k] - E_un[k]
    return DirectReference(spectral_data=sd, unperturbed=E_un, paired=paired, displacements=disp)


def truncation_study(E, V, psi0_0: complex = 1.0, sizes: Sequence[int] = TRUNCATION_STUDY) -> dict:
    """Boundary-zero ``E1`` for each truncation size that the energies allow."""
    out = {}
    for n in sizes:
        if n <= len(E) and n <= np.asarray(V).shape[0]:
            out[int(n)] = closure_boundary_zero(E, V, psi0_0, n)
    return out
