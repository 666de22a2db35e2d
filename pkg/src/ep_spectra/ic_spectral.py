"""Oscillator-basis spectra of ``H = p^2 + (ix)^delta x^2``.

``delta = 0`` is the harmonic oscillator (Hermitian control) and
``delta = 1`` the imaginary cubic oscillator.  Operators are represented in
a truncated harmonic-oscillator eigenbasis through ladder matrices; parity
is ``diag((-1)^n)`` there, so the pseudo-Hermiticity ``P H P = H^H`` is a
direct matrix check.  The module also measures how the non-Hermitian
eigenbasis degenerates (neighbouring eigenvectors turning parallel,
projector norms growing) and builds the truncated metric operator.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InsufficientConvergence
from .numerics import SpectralData, as_matrix, eig_biorthogonal, norm2, normalized_overlap

CONVERGENCE_RTOL = 1e-6


def default_frequency(delta: int) -> float:
    """Basis frequency used when none is given.

    The Hermitian oscillator is diagonal at frequency 1.  For the cubic
    potential a stiffer basis (frequency 2) matches the narrower
    eigenfunctions and converges more levels at a given size.
    """
    return 1.0 if delta == 0 else 2.0


@dataclass(frozen=True)
class OscillatorSpec:
    delta: int
    basis_size: int
    frequency: Optional[float] = None

    def __post_init__(self):
        if self.delta not in (0, 1):
            raise ValueError(f"delta must be 0 or 1, got {self.delta!r}")
        if int(self.basis_size) != self.basis_size or self.basis_size < 4:
            raise ValueError(f"basis_size must be an integer >= 4, got {self.basis_size!r}")
        if self.frequency is None:
            object.__setattr__(self, "frequency", default_frequency(self.delta))
        if not (np.isfinite(self.frequency) and self.frequency > 0):
            raise ValueError("frequency must be positive")


def ladder_operators(M: int, frequency: float = 1.0):
    """Truncated ``x`` and ``p`` for an oscillator basis of the given frequency.

    ``x = (a + a^H) / sqrt(2 w)`` and ``p = i sqrt(w/2) (a^H - a)``.
    """
    a = np.diag(np.sqrt(np.arange(1, M, dtype=float)), 1).astype(complex)
    ad = a.conj().T
    x = (a + ad) / np.sqrt(2.0 * frequency)
    p = 1j * np.sqrt(frequency / 2.0) * (ad - a)
    return x, p


def _hamiltonian(delta: int, M: int, frequency: float) -> np.ndarray:
    x, p = ladder_operators(M, frequency)
    V = x @ x
    if delta == 1:
        V = 1j * (x @ V)
    return p @ p + V


def build_bb_matrix(spec: OscillatorSpec) -> np.ndarray:
    """``M x M`` Hamiltonian from products of the truncated ``x`` and ``p``.

    The last rows and columns carry the usual product-truncation error; the
    convergence checks absorb it.
    """
    return _hamiltonian(spec.delta, spec.basis_size, spec.frequency)


def exact_bb_matrix(delta: int, size: int, frequency: Optional[float] = None) -> np.ndarray:
    """Leading ``size x size`` block of the untruncated operator.

    The products reach at most three levels, so building at ``size + 3``
    and cropping gives exact matrix elements.
    """
    if frequency is None:
        frequency = default_frequency(delta)
    return _hamiltonian(delta, size + 3, frequency)[:size, :size]


def parity(M: int) -> np.ndarray:
    return np.diag((-1.0) ** np.arange(M)).astype(complex)


def pt_residual(H) -> float:
    """``‖P H P - H^H‖ / ‖H‖`` with oscillator parity ``P``."""
    H = as_matrix(H)
    P = parity(H.shape[0])
    scale = norm2(H)
    return norm2(P @ H @ P - H.conj().T) / (scale if scale > 0 else 1.0)


def match_levels(coarse: np.ndarray, fine: np.ndarray, rtol: float = CONVERGENCE_RTOL) -> np.ndarray:
    """Boolean mask of ``coarse`` levels that reappear in ``fine``.

    Each coarse eigenvalue is paired with its nearest fine eigenvalue.
    Index pairing by sort order is unreliable here because truncation
    produces spurious levels with small real and huge imaginary parts.
    """
    coarse = np.asarray(coarse)
    fine = np.asarray(fine)
    if fine.size == 0:
        return np.zeros(coarse.shape, dtype=bool)
    d = np.abs(coarse[:, None] - fine[None, :]).min(axis=1)
    return d <= rtol * (1 + np.abs(coarse))


@dataclass
class ConvergenceTable:
    delta: int
    frequency: float
    M_list: list
    eigenvalues: list
    converged: np.ndarray
    spectra: list = field(repr=False, default_factory=list)

    @property
    def converged_levels(self) -> np.ndarray:
        """Converged eigenvalues of the second-largest basis, ascending real part."""
        if len(self.M_list) < 2:
            return np.zeros(0, dtype=complex)
        return np.asarray(self.eigenvalues[-2])[self.converged]

    @property
    def converged_count(self) -> int:
        return int(np.count_nonzero(self.converged))


def _spectrum(delta, M, frequency):
    return eig_biorthogonal(build_bb_matrix(OscillatorSpec(delta, M, frequency)))


def convergence_study(
    delta: int,
    M_list: Sequence[int],
    frequency: Optional[float] = None,
    workers: int = 1,
) -> ConvergenceTable:
    """Spectra for each basis size; levels of the second-largest size are
    flagged converged when the largest size reproduces them to
    ``1e-6 (1 + |E|)``."""
    M_list = [int(m) for m in M_list]
    if not M_list:
        raise ValueError("M_list must not be empty")
    if any(b <= a for a, b in zip(M_list, M_list[1:])):
        raise ValueError("M_list must be strictly ascending")
    spec0 = OscillatorSpec(delta, M_list[0], frequency)
    freq = spec0.frequency
    if workers > 1 and len(M_list) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            spectra = list(pool.map(lambda m: _spectrum(delta, m, freq), M_list))
    else:
        spectra = [_spectrum(delta, m, freq) for m in M_list]
    eigs = [np.asarray(sd.eigenvalues) for sd in spectra]
    if len(M_list) < 2:
        conv = np.zeros(len(eigs[0]), dtype=bool)
    else:
        conv = match_levels(eigs[-2], eigs[-1])
    return ConvergenceTable(delta, freq, M_list, eigs, conv, spectra)


@dataclass(frozen=True)
class ParallelizationReport:
    overlaps_right: np.ndarray
    overlaps_left: np.ndarray
    kappa: np.ndarray
    converged_count: int
    levels: np.ndarray


def parallelization_diagnostics(
    sd: SpectralData, n_max: Optional[int] = None, sd_refined: Optional[SpectralData] = None
) -> ParallelizationReport:
    """Neighbour overlaps and projector norms over the converged window.

    Levels of ``sd`` that reappear in ``sd_refined`` (a run at a larger
    basis) form the window, in ascending real part; without a refined run
    every level counts.  Entries ``n = 0 .. n_max`` of that window are
    reported.
    """
    E = np.asarray(sd.eigenvalues)
    if sd_refined is None:
        mask = np.ones(E.shape, dtype=bool)
    else:
        mask = match_levels(E, np.asarray(sd_refined.eigenvalues))
    window = np.flatnonzero(mask)
    count = int(window.size)
    if len(E) >= 3 and count <= 2:
        raise InsufficientConvergence(f"only {count} converged levels; need at least 3")
    if n_max is None:
        n_max = count - 1
    if n_max < 0 or (count > 0 and n_max >= count):
        raise ValueError(f"n_max = {n_max} must be below the converged count {count}")
    idx = window[: n_max + 1]
    R = np.asarray(sd.right_vectors)[:, idx]
    L = np.asarray(sd.left_vectors)[:, idx]
    s_right = np.array([normalized_overlap(R[:, n], R[:, n + 1]) for n in range(len(idx) - 1)])
    s_left = np.array([normalized_overlap(L[:, n], L[:, n + 1]) for n in range(len(idx) - 1)])
    kappa = np.linalg.norm(R, axis=0) * np.linalg.norm(L, axis=0)
    return ParallelizationReport(
        overlaps_right=s_right,
        overlaps_left=s_left,
        kappa=kappa,
        converged_count=count,
        levels=E[idx].copy(),
    )


@dataclass(frozen=True)
class MetricReport:
    Theta: np.ndarray
    quasi_hermiticity_residual: float
    min_eigenvalue: float
    min_eigenvalue_full: float
    rank: int
    hermiticity_defect: float


def metric_operator(sd: SpectralData, K: int, hamiltonian=None) -> MetricReport:
    """Rank-``K`` metric ``Theta = sum_{n<K} |psi_n>> <<psi_n|`` and its checks.

    ``hamiltonian`` is the operator the quasi-Hermiticity residual
    ``‖H^H Theta - Theta H‖ / ‖Theta‖`` is measured against; it defaults to
    the matrix ``sd`` was computed from, in which case the residual only
    reflects rounding.  Passing a larger, untruncated block measures the
    truncation error instead (``Theta`` is zero-padded to fit).
    ``min_eigenvalue`` is taken on the span of the ``K`` ketkets.
    """
    n = len(sd)
    if int(K) != K or K < 1 or K > n:
        raise ValueError(f"K must be an integer in [1, {n}], got {K!r}")
    K = int(K)
    L = np.asarray(sd.left_vectors)[:, :K]
    Theta = L @ L.conj().T
    herm_defect = float(np.abs(Theta - Theta.conj().T).max())
    Theta = 0.5 * (Theta + Theta.conj().T)

    H = sd.matrix if hamiltonian is None else as_matrix(hamiltonian)
    if H is None:
        raise ValueError("spectral data carries no matrix; pass hamiltonian explicitly")
    dim = Theta.shape[0]
    if H.shape[0] < dim:
        raise ValueError("reference Hamiltonian is smaller than the basis")
    T = np.zeros(H.shape, dtype=complex)
    T[:dim, :dim] = Theta
    residual = norm2(H.conj().T @ T - T @ H) / norm2(Theta)

    gram = L.conj().T @ L
    min_span = float(np.linalg.eigvalsh(0.5 * (gram + gram.conj().T)).min())
    min_full = float(np.linalg.eigvalsh(Theta).min()) if K == dim else 0.0
    rank = int(np.linalg.matrix_rank(L))
    return MetricReport(
        Theta=Theta,
        quasi_hermiticity_residual=float(residual),
        min_eigenvalue=min_span,
        min_eigenvalue_full=min_full,
        rank=rank,
        hermiticity_defect=herm_defect,
    )
