"""Dense complex linear-algebra kernel.

Thin, validated wrappers around LAPACK (through scipy) that return the
biorthonormal eigen-data the rest of the package works with.  Matrices are
plain ``numpy.ndarray`` objects of complex dtype; :func:`as_matrix` is the
single gate that checks shape and finiteness.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import NoConvergence, SingularMatrix

log = logging.getLogger(__name__)

UNIT_ROUNDOFF = np.finfo(float).eps / 2
DEFAULT_MAX_DIM = 512
CLUSTER_RTOL = 1e-8
PIVOT_RTOL = 1e-13


def as_matrix(M, square: bool = True) -> np.ndarray:
    """Return ``M`` as a finite 2-D complex array (a copy when needed)."""
    A = np.array(M, dtype=complex, ndmin=2)
    if A.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {A.shape}")
    if A.size == 0:
        raise ValueError("matrix must be non-empty")
    if square and A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def norm2(M) -> float:
    """Spectral (operator 2-) norm."""
    return float(np.linalg.norm(np.asarray(M), 2))


def relative_residual(R, scale) -> float:
    """``‖R‖ / ‖scale‖`` in the 2-norm, falling back to ``‖R‖`` when scale is zero."""
    s = norm2(scale)
    r = norm2(R)
    return r / s if s > 0 else r


def solve_linear(M, b) -> np.ndarray:
    """Solve ``M x = b`` by LU with partial pivoting and one refinement step.

    Raises :class:`SingularMatrix` when a pivot falls below
    ``1e-13 * ‖M‖``.
    """
    A = as_matrix(M)
    rhs = np.asarray(b, dtype=complex)
    if rhs.shape[0] != A.shape[0]:
        raise ValueError(f"right-hand side has length {rhs.shape[0]}, expected {A.shape[0]}")
    if not np.all(np.isfinite(rhs)):
        raise ValueError("right-hand side has non-finite entries")
    scale = norm2(A)
    with warnings.catch_warnings():
        # exact zero pivots are reported below as SingularMatrix
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(A, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if scale == 0 or pivots.min() < PIVOT_RTOL * scale:
        raise SingularMatrix(
            f"pivot magnitude {pivots.min():.3e} below {PIVOT_RTOL:g} x ||M|| = {PIVOT_RTOL * scale:.3e}"
        )
    x = sla.lu_solve((lu, piv), rhs, check_finite=False)
    # one step of iterative refinement; cheap and tightens ill-conditioned solves
    x = x + sla.lu_solve((lu, piv), rhs - A @ x, check_finite=False)
    return x


def min_singular_value(M) -> float:
    A = as_matrix(M, square=False)
    return float(sla.svdvals(A, check_finite=False).min())


def _sort_order(w: np.ndarray) -> np.ndarray:
    # ascending real part, ties broken by imaginary part
    return np.lexsort((w.imag, w.real))


@dataclass(frozen=True)
class SpectralData:
    """Eigenvalues with paired right kets and left "ketkets".

    Columns of ``right_vectors`` have unit Euclidean norm.  Columns of
    ``left_vectors`` are scaled so that ``left_n^H right_n = 1`` for every
    level outside a defective cluster; inside one they are left at unit
    norm because no biorthonormal pairing exists.
    """

    eigenvalues: np.ndarray
    right_vectors: np.ndarray
    left_vectors: np.ndarray
    defect_flag: bool
    biorthogonality_residual: float
    matrix: Optional[np.ndarray] = None

    def __post_init__(self):
        for arr in (self.eigenvalues, self.right_vectors, self.left_vectors, self.matrix):
            if arr is not None:
                arr.flags.writeable = False
        if self.right_vectors.shape[1] != self.eigenvalues.shape[0]:
            raise ValueError("right_vectors count must equal eigenvalue count")

    def __len__(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def dimension(self) -> int:
        return self.right_vectors.shape[0]

    @property
    def projector_norms(self) -> np.ndarray:
        """``‖ψ_n‖·‖ψ_n⟩⟩‖`` under the biorthonormal pairing (eigenvalue condition numbers)."""
        return np.linalg.norm(self.right_vectors, axis=0) * np.linalg.norm(self.left_vectors, axis=0)

    @property
    def error_bounds(self) -> np.ndarray:
        """First-order forward error estimates ``κ_n · u · ‖M‖`` for each eigenvalue.

        These make precision loss visible: highly non-normal levels can have
        bounds far above machine precision.
        """
        scale = norm2(self.matrix) if self.matrix is not None else 1.0
        return self.projector_norms * UNIT_ROUNDOFF * scale * len(self)

    def select(self, indices: Sequence[int]) -> "SpectralData":
        """Sub-spectrum restricted to ``indices`` (order preserved as given)."""
        idx = np.asarray(list(indices), dtype=int)
        R = self.right_vectors[:, idx]
        L = self.left_vectors[:, idx]
        return SpectralData(
            eigenvalues=self.eigenvalues[idx].copy(),
            right_vectors=R.copy(),
            left_vectors=L.copy(),
            defect_flag=self.defect_flag,
            biorthogonality_residual=_biorth_residual(L, R),
            matrix=None if self.matrix is None else self.matrix.copy(),
        )


def _biorth_residual(L: np.ndarray, R: np.ndarray) -> float:
    if R.shape[1] == 0:
        return 0.0
    G = L.conj().T @ R
    return float(np.max(np.abs(G - np.eye(G.shape[0]))))


def _gap_clusters(w: np.ndarray, tol: float) -> list[np.ndarray]:
    """Single-linkage clusters of eigenvalues closer than ``tol``."""
    from scipy.sparse.csgraph import connected_components

    adj = np.abs(w[:, None] - w[None, :]) < tol
    n_comp, labels = connected_components(adj, directed=False)
    return [np.flatnonzero(labels == c) for c in range(n_comp)]


def eig_biorthogonal(M, max_dim: int = DEFAULT_MAX_DIM) -> SpectralData:
    """Full eigendecomposition with biorthonormalized left and right vectors.

    The left vectors come out of the same LAPACK call as the right ones
    (``zgeev`` with both sides requested), so the pairing is exact by
    construction.  Clusters with pairwise gaps below ``1e-8 ‖M‖`` are tested
    for a geometric multiplicity deficit; semisimple clusters are
    biorthonormalized blockwise.
    """
    A = as_matrix(M)
    n = A.shape[0]
    if n > max_dim:
        raise ValueError(f"dimension {n} exceeds configured maximum {max_dim}")
    try:
        w, vl, vr = sla.eig(A, left=True, right=True, check_finite=False)
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
        raise NoConvergence(f"eigensolver failed: {exc}") from exc
    order = _sort_order(w)
    w, vl, vr = w[order], vl[:, order], vr[:, order]
    vr = vr / np.linalg.norm(vr, axis=0)
    vl = vl / np.linalg.norm(vl, axis=0)

    scale = norm2(A)
    tol = CLUSTER_RTOL * scale if scale > 0 else CLUSTER_RTOL
    defect = False
    for idx in _gap_clusters(w, tol):
        if idx.size == 1:
            continue
        centre = w[idx].mean()
        sv = sla.svdvals(A - centre * np.eye(n), check_finite=False)
        geometric = int(np.sum(sv < tol))
        if geometric < idx.size:
            defect = True
            continue
        # semisimple degenerate cluster: biorthonormalize the block
        G = vl[:, idx].conj().T @ vr[:, idx]
        vl[:, idx] = vl[:, idx] @ np.linalg.inv(G).conj().T

    in_block = np.zeros(n, dtype=bool)
    for idx in _gap_clusters(w, tol):
        if idx.size > 1:
            in_block[idx] = True
    for k in np.flatnonzero(~in_block):
        d = np.vdot(vl[:, k], vr[:, k])
        # numerically orthogonal pair: no biorthonormal partner exists
        if abs(d) > 100 * UNIT_ROUNDOFF:
            vl[:, k] = vl[:, k] / np.conj(d)
        else:
            defect = True

    sd = SpectralData(
        eigenvalues=w,
        right_vectors=vr,
        left_vectors=vl,
        defect_flag=defect,
        biorthogonality_residual=_biorth_residual(vl, vr),
        matrix=A,
    )
    worst = float(sd.error_bounds.max())
    if worst > 1e-6 * max(scale, 1.0):
        log.info("eigenvalue error bound reaches %.2e (||M|| = %.2e); precision is being lost", worst, scale)
    return sd


def reconstruct(sd: SpectralData) -> np.ndarray:
    """``Σ λ_n |ψ_n⟩⟨⟨ψ_n|`` from spectral data."""
    return (sd.right_vectors * sd.eigenvalues) @ sd.left_vectors.conj().T


def normalized_overlap(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(min(abs(np.vdot(u, v)) / (nu * nv), 1.0))
