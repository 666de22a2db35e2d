"""Chain basis that trades nearly parallel eigenvectors for a Jordan-like chain.

Below a partition index ``K`` the basis keeps the eigenvectors.  From ``K``
on, column ``f_{K+p}`` is a combination of eigenvectors ``K .. K+p`` chosen
so that ``(H - E_{K+p}) f_{K+p} = f_{K+p-1}``; in this basis ``H`` is
diagonal on the first block and upper bidiagonal (unit superdiagonal) on the
chain block.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSpectrum
from .numerics import SpectralData, min_singular_value, norm2, normalized_overlap

log = logging.getLogger(__name__)

GAP_TOL = 1e-10
PHASES = ("decoupled", "positive")


def _check_window(E: np.ndarray, K: int, p_max: int) -> np.ndarray:
    if int(K) != K or K < 0:
        raise ValueError(f"K must be a nonnegative integer, got {K!r}")
    if int(p_max) != p_max or p_max < 0:
        raise ValueError(f"p_max must be a nonnegative integer, got {p_max!r}")
    if len(E) < K + p_max + 1:
        raise ValueError(f"need {K + p_max + 1} energies, got {len(E)}")
    tail = E[K : K + p_max + 1]
    gaps = np.abs(tail[:, None] - tail[None, :])
    np.fill_diagonal(gaps, np.inf)
    if gaps.size and gaps.min() < GAP_TOL:
        i, j = np.unravel_index(np.argmin(gaps), gaps.shape)
        raise DegenerateSpectrum(
            f"|E[{K + i}] - E[{K + j}]| = {gaps.min():.3e} is below {GAP_TOL:g}"
        )
    return tail


def _next_row(prev: np.ndarray, tail: np.ndarray, p: int) -> np.ndarray:
    """Off-diagonal part of row ``p`` from the full row ``p - 1``."""
    row = np.zeros(len(tail), dtype=np.result_type(prev, tail))
    row[:p] = prev[:p] / (tail[:p] - tail[p])
    return row


def chain_coefficients(E, K: int, p_max: int) -> np.ndarray:
    """Lower-triangular table ``c[p, n]`` with unit diagonal.

    ``c[k, m] = c[k-1, m] / (E_{K+m} - E_{K+k})`` for ``m < k``; entries
    above the diagonal are zero.  The diagonal is a free normalization,
    fixed here to one; :func:`assemble_chain_basis` chooses it differently.
    Real energies are processed in real arithmetic; the table is returned
    as complex either way.
    """
    E = np.asarray(E)
    E = E.astype(complex if np.iscomplexobj(E) else float)
    tail = _check_window(E, K, p_max)
    table = np.zeros((p_max + 1, p_max + 1), dtype=E.dtype)
    table[0, 0] = 1.0
    for p in range(1, p_max + 1):
        table[p] = _next_row(table[p - 1], tail, p)
        table[p, p] = 1.0
    return table.astype(complex)


@dataclass(frozen=True)
class ChainBasis:
    K: int
    p_max: int
    coefficients: np.ndarray
    R: np.ndarray
    J_iep: np.ndarray
    recurrence_residuals: np.ndarray
    similarity_residual: float
    boundary_residual: float
    phase: str
    unit_norm: np.ndarray


def iep_canonical_form(E, K: int, p_max: int) -> np.ndarray:
    """``diag(E_0 .. E_{K-1})`` followed by a bidiagonal chain block on ``E_K .. E_{K+p_max}``."""
    E = np.asarray(E, dtype=complex)[: K + p_max + 1]
    Jm = np.diag(E)
    for p in range(1, p_max + 1):
        Jm[K + p - 1, K + p] = 1.0
    return Jm


def _diagonal_coefficient(g, psi, earlier, phase):
    """Diagonal coefficient making ``g + c psi`` a unit vector.

    The modulus of the component along ``psi`` is fixed by the unit norm.
    Its phase is either real positive, or (``decoupled``) chosen to make the
    new column as far from the span of the earlier columns as possible.
    When the part of ``g`` orthogonal to ``psi`` already has norm >= 1 no
    unit column exists; the component along ``psi`` then gets the same
    modulus as that part.  Returns ``(coefficient, unit_norm_reached)``.
    """
    along = np.vdot(psi, g)
    g_perp = g - along * psi
    rest = np.linalg.norm(g_perp)
    feasible = rest < 1 - 1e-12
    if feasible:
        rho = np.sqrt(1 - rest**2)
    else:
        log.warning("chain column cannot have unit norm (orthogonal part %.3f); using equal weights", rest)
        rho = rest
    unit = 1.0
    if phase == "decoupled" and earlier.shape[1] > 0:
        Q, _ = np.linalg.qr(earlier)
        u = Q @ (Q.conj().T @ g_perp)
        v = Q @ (Q.conj().T @ psi)
        z = np.vdot(u, v)
        if abs(z) > 0:
            unit = -np.conj(z) / abs(z)
    return rho * unit - along, feasible


def assemble_chain_basis(sd: SpectralData, K: int, p_max: int, phase: str = "decoupled") -> ChainBasis:
    """Columns ``psi_0 .. psi_{K-1}, f_K .. f_{K+p_max}`` with unit-norm chain columns.

    ``sd`` should hold only trusted (converged) levels in ascending order.
    The recurrence residual of chain column ``m`` is
    ``‖(H - E_{K+m}) f_{K+m} - f_{K+m-1}‖ / ‖f_{K+m-1}‖``.  The similarity
    residual of ``H R - R J`` excludes the last column, whose residual is
    reported as ``boundary_residual``.
    """
    if phase not in PHASES:
        raise ValueError(f"phase must be one of {PHASES}, got {phase!r}")
    E = np.asarray(sd.eigenvalues)
    tail = _check_window(E, K, p_max)
    psi = np.asarray(sd.right_vectors)
    psi = psi / np.linalg.norm(psi, axis=0)
    cols = [psi[:, n] for n in range(K + 1)]
    table = np.zeros((p_max + 1, p_max + 1), dtype=complex)
    table[0, 0] = 1.0
    unit_norm = np.ones(p_max + 1, dtype=bool)
    for p in range(1, p_max + 1):
        row = _next_row(table[p - 1], tail, p)
        g = psi[:, K : K + p] @ row[:p]
        row[p], unit_norm[p] = _diagonal_coefficient(g, psi[:, K + p], np.column_stack(cols), phase)
        table[p] = row
        cols.append(g + row[p] * psi[:, K + p])
    R = np.column_stack(cols)
    Jm = iep_canonical_form(E, K, p_max)

    H = sd.matrix
    if H is None:
        raise ValueError("spectral data carries no matrix")
    rec = np.array(
        [
            np.linalg.norm(H @ R[:, K + m] - tail[m] * R[:, K + m] - R[:, K + m - 1]) / np.linalg.norm(R[:, K + m - 1])
            for m in range(1, p_max + 1)
        ]
    )
    D = H @ R - R @ Jm
    scale = norm2(H)
    sim = norm2(D[:, :-1]) / scale if R.shape[1] > 1 else 0.0
    boundary = float(np.linalg.norm(D[:, -1]) / scale)
    return ChainBasis(
        K=int(K),
        p_max=int(p_max),
        coefficients=table,
        R=R,
        J_iep=Jm,
        recurrence_residuals=rec,
        similarity_residual=float(sim),
        boundary_residual=boundary,
        phase=phase,
        unit_norm=unit_norm,
    )


@dataclass(frozen=True)
class BasisDiagnostics:
    sigma_min_chain: float
    sigma_min_eig: float
    overlap_profile_chain: np.ndarray
    overlap_profile_eig: np.ndarray

    @property
    def improvement(self) -> float:
        return self.sigma_min_chain / self.sigma_min_eig if self.sigma_min_eig > 0 else float("inf")


def basis_diagnostics(cb: ChainBasis, sd: SpectralData) -> BasisDiagnostics:
    """Smallest singular values and adjacent-column overlaps of both bases."""
    n = cb.R.shape[1]
    if sd.dimension != cb.R.shape[0] or len(sd) < n:
        raise ValueError("spectral data does not match the chain basis")
    chain = cb.R / np.linalg.norm(cb.R, axis=0)
    eig = np.asarray(sd.right_vectors)[:, :n]
    eig = eig / np.linalg.norm(eig, axis=0)

    def profile(B):
        return np.array([normalized_overlap(B[:, i], B[:, i + 1]) for i in range(B.shape[1] - 1)])

    return BasisDiagnostics(
        sigma_min_chain=min_singular_value(chain),
        sigma_min_eig=min_singular_value(eig),
        overlap_profile_chain=profile(chain),
        overlap_profile_eig=profile(eig),
    )
