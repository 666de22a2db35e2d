"""Finite matrices with exceptional points.

Jordan blocks, the real tridiagonal "chain" family whose spectrum at zero
coupling is the odd integers ``2J-1, ..., 1-2J``, a one-parameter sweep that
locates the coalescence point along a ray in coupling space, and the
construction of a Jordan chain (transition matrix) at a defective eigenvalue.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import ChainBreakdown, NoCoalescence, NotAnEP
from .numerics import UNIT_ROUNDOFF, as_matrix, eig_biorthogonal, norm2, solve_linear

RANK_RTOL = 1e-8
CHAIN_RTOL = 1e-6
BISECTION_RTOL = 1e-10
COALESCENCE_RTOL = 1e-4


def jordan_block(N: int, eta: complex = 0.0) -> np.ndarray:
    """``N x N`` matrix with ``eta`` on the diagonal and ones on the superdiagonal."""
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N!r}")
    N = int(N)
    return np.eye(N, dtype=complex) * complex(eta) + np.eye(N, k=1, dtype=complex)


@dataclass
class LocatedEP:
    t_ep: float
    E_ep: complex
    gap_at_ep: float


@dataclass
class EPNModel:
    """Tridiagonal chain model of size ``2J`` swept along one coupling ray.

    ``coupling_direction`` lists the coupling multipliers from the outermost
    pair of rows to the innermost one; the actual couplings are
    ``t * coupling_direction``.
    """

    half_dimension: int
    coupling_direction: tuple
    t: float = 0.0
    located_ep: Optional[LocatedEP] = None

    def __post_init__(self):
        if int(self.half_dimension) != self.half_dimension or self.half_dimension < 1:
            raise ValueError("half_dimension must be a positive integer")
        self.half_dimension = int(self.half_dimension)
        direction = tuple(float(c) for c in np.atleast_1d(self.coupling_direction))
        if len(direction) != self.half_dimension:
            raise ValueError(
                f"coupling_direction needs {self.half_dimension} entries, got {len(direction)}"
            )
        if any(c < 0 or not math.isfinite(c) for c in direction):
            raise ValueError("coupling_direction entries must be finite and nonnegative")
        self.coupling_direction = direction

    @property
    def dimension(self) -> int:
        return 2 * self.half_dimension

    def at(self, t: float) -> "EPNModel":
        return EPNModel(self.half_dimension, self.coupling_direction, float(t))


def chain_hamiltonian(model: EPNModel) -> np.ndarray:
    J = model.half_dimension
    N = 2 * J
    couplings = [model.t * c for c in model.coupling_direction]
    # outermost -> innermost -> outermost, mirrored about the centre
    band = couplings + couplings[::-1][1:]
    H = np.diag(np.arange(N - 1, -N, -2, dtype=float)).astype(complex)
    idx = np.arange(N - 1)
    H[idx, idx + 1] = band
    H[idx + 1, idx] = -np.asarray(band)
    return H


def uniform_ep_direction(J: int) -> tuple:
    """Coupling ray along which the whole chain coalesces at ``t = 1``.

    With multipliers ``sqrt(k (2J - k))`` the spectrum is the odd integers
    scaled by ``sqrt(1 - t^2)``, so all ``2J`` levels meet at zero.  Useful
    as a known-answer direction for sweeps.
    """
    N = 2 * J
    return tuple(math.sqrt(k * (N - k)) for k in range(1, J + 1))


def _pairwise_gaps(w: np.ndarray) -> np.ndarray:
    d = np.abs(w[:, None] - w[None, :])
    return d[np.triu_indices(len(w), k=1)]


def _max_overlap(vr: np.ndarray) -> float:
    G = np.abs(vr.conj().T @ vr)
    np.fill_diagonal(G, 0.0)
    return float(min(G.max(), 1.0))


def _trace_discriminant(H: np.ndarray) -> float:
    """Mean squared deviation of the eigenvalues from their centroid.

    Equals ``tr((H - c)^2) / N`` with ``c = tr(H)/N``.  Positive while the
    centred spectrum is real, zero at a full coalescence, and it usually
    changes sign there.  No eigensolve is needed, so it stays accurate right
    at the singular point where eigenvalues are ill-conditioned.
    """
    N = H.shape[0]
    C = H - np.trace(H) / N * np.eye(N)
    return float(np.real(np.trace(C @ C)) / N)


@dataclass
class SweepReport:
    t: np.ndarray
    min_gap: np.ndarray
    max_gap: np.ndarray
    max_overlap: np.ndarray
    defect: np.ndarray
    located_ep: LocatedEP
    coalescence_tolerance: float
    bracket: tuple = field(default=(math.nan, math.nan))


def _sweep_point(model: EPNModel, t: float):
    H = chain_hamiltonian(model.at(t))
    sd = eig_biorthogonal(H)
    gaps = _pairwise_gaps(sd.eigenvalues)
    return float(gaps.min()), float(gaps.max()), _max_overlap(sd.right_vectors), bool(sd.defect_flag)


def coalescence_tolerance(N: int, scale: float) -> float:
    """Largest max-gap still accepted as an ``N``-fold coalescence.

    An order-``N`` coalescence splits under rounding by about ``u^(1/N)`` of
    the matrix norm, so a fixed relative threshold cannot be met for larger
    ``N``; the floor ``1e-4`` is kept where precision permits.
    """
    return scale * max(COALESCENCE_RTOL, 10.0 * UNIT_ROUNDOFF ** (1.0 / N))


def _bisect(pred: Callable[[float], bool], lo: float, hi: float) -> float:
    """Shrink ``[lo, hi]`` with ``pred(lo) = True, pred(hi) = False`` to float resolution."""
    while hi - lo > BISECTION_RTOL * 1e-6 * max(abs(lo), abs(hi), 1.0):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if pred(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _expand(pred, start: float, step: float, max_steps: int = 80):
    """Walk away from ``start`` (where ``pred`` holds) with doubling steps until it fails."""
    lo = start
    for _ in range(max_steps):
        hi = lo + step
        if not pred(hi):
            return (lo, hi) if step > 0 else (hi, lo)
        lo, step = hi, 2 * step
    return None


def locate_ep(model: EPNModel, t_grid: Sequence[float], max_gap: Optional[np.ndarray] = None) -> tuple:
    """Return ``(t_ep, bracket)`` refining the grid minimizer of the max gap.

    Refinement bisects on the sign of the trace discriminant; if it never
    changes sign the reality of the spectrum is used instead.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if max_gap is None:
        max_gap = np.array([_sweep_point(model, t)[1] for t in t_grid])
    i_best = int(np.argmin(max_gap))

    def disc(t):
        return _trace_discriminant(chain_hamiltonian(model.at(t)))

    def spectrum_real(t):
        H = chain_hamiltonian(model.at(t))
        w = sla.eigvals(H)
        return bool(np.abs(w.imag).max() <= 1e3 * UNIT_ROUNDOFF ** (1.0 / model.dimension) * norm2(H))

    for pred in (lambda t: disc(t) > 0, spectrum_real):
        bracket = _bracket_near(pred, t_grid, i_best)
        if bracket is not None:
            lo, hi = bracket
            return _bisect(pred, lo, hi), bracket
    return float(t_grid[i_best]), (float(t_grid[i_best]), float(t_grid[i_best]))


def _bracket_near(pred, t_grid: np.ndarray, i_best: int):
    flags = [pred(t) for t in t_grid]
    changes = [i for i in range(len(t_grid) - 1) if flags[i] and not flags[i + 1]]
    if changes:
        i = min(changes, key=lambda j: min(abs(j - i_best), abs(j + 1 - i_best)))
        return float(t_grid[i]), float(t_grid[i + 1])
    span = float(t_grid[-1] - t_grid[0]) if len(t_grid) > 1 else 1.0
    step = span / max(len(t_grid) - 1, 1) if span > 0 else 1e-3 * max(abs(t_grid[0]), 1.0)
    if flags[-1]:
        return _expand(pred, float(t_grid[-1]), step)
    return None


def _workers(workers: Optional[int]) -> int:
    if workers is None:
        import os

        env = os.environ.get("EP_SPECTRA_THREADS")
        workers = int(env) if env else 1
    return max(1, int(workers))


def ep_sweep(model: EPNModel, t_grid: Sequence[float], workers: Optional[int] = None) -> SweepReport:
    """Scan ``t`` along the model's coupling ray and locate the coalescence.

    The located point is stored on ``model.located_ep``.  Grid points are
    evaluated independently (optionally on a thread pool) and merged in
    grid order.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0:
        raise ValueError("t_grid must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(t_grid)) or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be finite and strictly ascending")
    n_workers = _workers(workers)
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            rows = list(pool.map(lambda t: _sweep_point(model, t), t_grid))
    else:
        rows = [_sweep_point(model, t) for t in t_grid]
    min_gap, max_gap, overlap, defect = (np.array(col) for col in zip(*rows))

    t_ep, bracket = locate_ep(model, t_grid, max_gap)
    H_ep = chain_hamiltonian(model.at(t_ep))
    E_ep = complex(np.trace(H_ep) / model.dimension)
    gap_ep = float(_pairwise_gaps(sla.eigvals(H_ep)).max())
    tol = coalescence_tolerance(model.dimension, norm2(H_ep))
    if gap_ep > tol:
        raise NoCoalescence(
            f"max eigenvalue gap {gap_ep:.3e} at t = {t_ep:.12g} exceeds tolerance {tol:.3e}"
        )
    located = LocatedEP(t_ep=float(t_ep), E_ep=E_ep, gap_at_ep=gap_ep)
    model.located_ep = located
    return SweepReport(
        t=t_grid,
        min_gap=min_gap.astype(float),
        max_gap=max_gap.astype(float),
        max_overlap=overlap.astype(float),
        defect=defect.astype(bool),
        located_ep=located,
        coalescence_tolerance=tol,
        bracket=bracket,
    )


@dataclass(frozen=True)
class TransitionMatrix:
    R: np.ndarray
    jordan_eigenvalue: complex
    similarity_residual: float
    inverse_condition: float
    chain_residual: float = 0.0


def _canonical_phase(v: np.ndarray) -> np.ndarray:
    v = v / np.linalg.norm(v)
    big = np.flatnonzero(np.abs(v) > 1e-12 * np.abs(v).max())
    first = v[big[0]]
    return v * (abs(first) / first)


def transition_matrix(H, E_ep: complex) -> TransitionMatrix:
    """Jordan chain ``Psi_0, ..., Psi_{N-1}`` of ``H`` at ``E_ep`` as matrix columns.

    ``Psi_0`` spans the kernel of ``H - E_ep`` (unit norm, first nonzero
    entry real positive).  Each later vector is the minimal-norm solution of
    ``(H - E_ep) Psi_k = Psi_{k-1}``, hence orthogonal to ``Psi_0``.
    """
    H = as_matrix(H)
    N = H.shape[0]
    scale = norm2(H)
    if scale == 0:
        scale = 1.0
    A = H - complex(E_ep) * np.eye(N)
    U, s, Vh = sla.svd(A)
    tol = RANK_RTOL * scale
    rank = int(np.sum(s > tol))
    if rank != N - 1:
        raise NotAnEP(
            f"rank of H - E_ep is {rank} (need {N - 1}); singular values tail {s[-2:] if N > 1 else s}"
        )
    psi0 = _canonical_phase(Vh[-1].conj())
    # rank-(N-1) pseudo-inverse: the minimal-norm solution is orthogonal to the kernel
    pinv = (Vh[:-1].conj().T / s[:-1]) @ U[:, :-1].conj().T
    cols = [psi0]
    worst = 0.0
    for k in range(1, N):
        nxt = pinv @ cols[-1]
        nxt = nxt - np.vdot(psi0, nxt) * psi0
        res = np.linalg.norm(A @ nxt - cols[-1])
        rel = res / (scale * max(1.0, np.linalg.norm(nxt)))
        if rel > CHAIN_RTOL:
            raise ChainBreakdown(f"chain step {k}: least-squares residual {rel:.3e} x ||H||")
        worst = max(worst, rel)
        cols.append(nxt)
    R = np.column_stack(cols)
    Jm = jordan_block(N, E_ep)
    sim = max(verify_jordan_form(H, R, Jm), norm2(H @ R - R @ Jm) / scale)
    return TransitionMatrix(
        R=R,
        jordan_eigenvalue=complex(E_ep),
        similarity_residual=float(sim),
        inverse_condition=float(np.linalg.cond(R)),
        chain_residual=float(worst),
    )


def verify_jordan_form(H, R, J_matrix) -> float:
    """``‖R⁻¹ H R - J‖ / ‖H‖``."""
    H = as_matrix(H)
    R = as_matrix(R)
    J_matrix = as_matrix(J_matrix)
    if not (H.shape == R.shape == J_matrix.shape):
        raise ValueError("H, R and J must have the same square shape")
    X = solve_linear(R, H @ R)
    scale = norm2(H)
    return norm2(X - J_matrix) / (scale if scale > 0 else 1.0)
