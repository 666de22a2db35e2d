"""Perturbed Jordan blocks: reduced linear system, secular function, roots.

For ``H = J_N(0) + lam V`` the eigenproblem is rewritten with the first
component of the eigenvector pinned to one.  The remaining components plus
a slack variable solve a unit-lower-triangular system
``(A_inv + lam Z) y = r`` whose last entry vanishes exactly at the
eigenvalues.  The same machinery gives the admissibility test of structured
perturbation families (``lam V`` entries scaling as ``lam^e mu``) and the
diagonal rescaling that exposes bounded reduced perturbations.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg as sla
from scipy import stats

from .errors import DegenerateData, RootFindingFailure, SeriesDiverges, SingularMatrix
from .numerics import as_matrix, norm2, solve_linear

log = logging.getLogger(__name__)

DIRECT = "direct"
Order = Union[int, str]


@dataclass(frozen=True)
class ReducedSystem:
    N: int
    epsilon: complex
    lam: float
    A: np.ndarray
    A_inv: np.ndarray
    Z: np.ndarray
    r: np.ndarray

    @property
    def iteration_matrix(self) -> np.ndarray:
        """``lam A Z``, the matrix whose powers make up the resolvent series."""
        return self.lam * (self.A @ self.Z)


def _check_lambda(lam) -> float:
    lam = float(lam)
    if not np.isfinite(lam) or lam < 0:
        raise ValueError(f"lambda must be finite and nonnegative, got {lam}")
    return lam


def assemble_system(V, epsilon: complex, lam: float) -> ReducedSystem:
    V = as_matrix(V)
    N = V.shape[0]
    if N < 2:
        raise ValueError("perturbation must be at least 2 x 2")
    lam = _check_lambda(lam)
    eps = complex(epsilon)
    i, j = np.indices((N, N))
    A = np.where(i >= j, eps ** np.maximum(i - j, 0), 0).astype(complex)
    A_inv = np.eye(N, dtype=complex) - eps * np.eye(N, k=-1)
    Z = np.zeros_like(V)
    Z[:, :-1] = V[:, 1:]
    r = -lam * V[:, 0].copy()
    r[0] += eps
    return ReducedSystem(N=N, epsilon=eps, lam=lam, A=A, A_inv=A_inv, Z=Z, r=r)


def spectral_radius(system: ReducedSystem) -> float:
    # exact eigenvalues are cheap at these sizes; no need for a power-iteration estimate
    return float(np.abs(sla.eigvals(system.iteration_matrix)).max())


def series_tail_bound(system: ReducedSystem, order: int) -> float:
    """Geometric bound on the truncation error of the order-``order`` series."""
    q = norm2(system.iteration_matrix)
    if q >= 1:
        return float("inf")
    return q ** (order + 1) / (1 - q) * float(np.linalg.norm(system.A @ system.r))


def secular_value(system: ReducedSystem, order: Order = DIRECT) -> np.ndarray:
    """Solution ``y = (Psi_2, ..., Psi_N, slack)`` of the reduced system.

    ``order`` is a nonnegative integer for the truncated resolvent series or
    ``"direct"`` for an exact solve of ``(I + lam A Z) y = A r``.
    """
    Ar = system.A @ system.r
    if order == DIRECT:
        M = np.eye(system.N) + system.iteration_matrix
        return solve_linear(M, Ar)
    if isinstance(order, bool) or int(order) != order or order < 0:
        raise ValueError(f"order must be a nonnegative integer or 'direct', got {order!r}")
    rho = spectral_radius(system)
    if rho >= 1:
        raise SeriesDiverges(f"spectral radius of lam*A*Z is {rho:.3e} >= 1")
    T = -system.iteration_matrix
    term = Ar
    y = Ar.copy()
    for _ in range(int(order)):
        term = T @ term
        y = y + term
    return y


@dataclass(frozen=True)
class SecularSolution:
    roots: np.ndarray
    reality_flags: np.ndarray
    y_vectors: np.ndarray
    method: str
    disk_radius: float
    residuals: np.ndarray


def reality_tolerance(eps: complex) -> float:
    return 1e-8 + 1e-4 * abs(eps)


def _root_sort_key(z: complex):
    real = abs(z.imag) <= reality_tolerance(z)
    return (0 if real else 1, z.real, z.imag)


def search_radius(V: np.ndarray, lam: float) -> float:
    """Radius of a disk guaranteed to hold every eigenvalue of ``J + lam V``.

    Takes the larger of ``2 (‖lam V‖ + lam^(1/N))`` and a bound from the
    characteristic polynomial, whose coefficient of ``eps^(N-k)`` is at
    most ``C(N, k) theta`` for ``theta = ‖lam V‖ <= 1``.
    """
    N = V.shape[0]
    theta = lam * norm2(V)
    nominal = 2 * (theta + lam ** (1.0 / N))
    cauchy = 1.01 * max((N * theta) ** (1.0 / N), N * theta) + theta
    return max(nominal, cauchy)


def _method_label(order: Order) -> str:
    return DIRECT if order == DIRECT else f"series({int(order)})"


def _newton(V, lam, order, z0, scale, max_iter=40):
    """Newton iteration on the slack component ``y_N(eps)``."""
    N = V.shape[0]
    z = complex(z0)
    shift = np.eye(N, k=-1)
    for _ in range(max_iter):
        sys_ = assemble_system(V, z, lam)
        y = secular_value(sys_, order)
        if order == DIRECT:
            rhs = shift @ y
            rhs[0] += 1.0
            dy = solve_linear(sys_.A_inv + lam * sys_.Z, rhs)[-1]
        else:
            h = 1e-5 * scale
            yp = secular_value(assemble_system(V, z + h, lam), order)[-1]
            ym = secular_value(assemble_system(V, z - h, lam), order)[-1]
            dy = (yp - ym) / (2 * h)
        if dy == 0:
            break
        step = y[-1] / dy
        z = z - step
        if abs(step) <= 4e-16 * max(abs(z), scale):
            break
    sys_ = assemble_system(V, z, lam)
    return z, secular_value(sys_, order), sys_


def solve_secular(V, lam: float, mode: Order = DIRECT, search: str = "polynomial") -> SecularSolution:
    """All roots of the secular condition ``y_N(eps) = 0``.

    ``search="polynomial"`` seeds Newton polishing with the eigenvalues of
    ``J_N(0) + lam V``; ``search="grid"`` starts from the ``N``-th roots of
    ``lam ‖V‖`` and deflates roots already found.  Every root is verified
    against ``|y_N| <= 1e-8 ‖r‖``.
    """
    V = as_matrix(V)
    N = V.shape[0]
    if N < 2:
        raise ValueError("perturbation must be at least 2 x 2")
    lam = _check_lambda(lam)
    if search not in ("polynomial", "grid"):
        raise ValueError(f"unknown search {search!r}; use 'polynomial' or 'grid'")
    radius = search_radius(V, lam)
    if lam == 0 or not np.any(V):
        sys_ = assemble_system(V, 0.0, lam)
        y = secular_value(sys_, mode)
        return SecularSolution(
            roots=np.zeros(N, dtype=complex),
            reality_flags=np.ones(N, dtype=bool),
            y_vectors=np.tile(y, (N, 1)),
            method=_method_label(mode),
            disk_radius=radius,
            residuals=np.zeros(N),
        )
    scale = max(lam ** (1.0 / N), lam * norm2(V))

    if search == "polynomial":
        H = np.eye(N, k=1) + lam * V
        seeds = sla.eigvals(H)
        found = []
        for s in seeds:
            found.append(_newton(V, lam, mode, s, scale))
        # polishing must not merge distinct seeds
        roots = np.array([f[0] for f in found])
        for k, s in enumerate(seeds):
            others = np.delete(seeds, k)
            sep = np.abs(others - s).min() if others.size else np.inf
            if abs(roots[k] - s) > 0.5 * sep:
                found[k] = (s,) + tuple(_evaluate(V, lam, mode, s))
    else:
        found = _grid_search(V, lam, mode, scale)

    roots, ys, residuals = [], [], []
    for z, y, sys_ in found:
        rnorm = float(np.linalg.norm(sys_.r))
        res = abs(y[-1])
        if not np.isfinite(res) or res > 1e-8 * max(rnorm, np.finfo(float).tiny):
            raise RootFindingFailure(f"root {z:.6g}: |y_N| = {res:.3e} exceeds 1e-8 ||r|| = {1e-8 * rnorm:.3e}")
        if abs(z) > radius:
            raise RootFindingFailure(f"root {z:.6g} lies outside the search disk |eps| <= {radius:.3e}")
        roots.append(complex(z))
        ys.append(y)
        residuals.append(res / rnorm if rnorm > 0 else res)
    order_idx = sorted(range(N), key=lambda k: _root_sort_key(roots[k]))
    roots_arr = np.array([roots[k] for k in order_idx])
    return SecularSolution(
        roots=roots_arr,
        reality_flags=np.array([abs(z.imag) <= reality_tolerance(z) for z in roots_arr]),
        y_vectors=np.array([ys[k] for k in order_idx]),
        method=_method_label(mode),
        disk_radius=radius,
        residuals=np.array([residuals[k] for k in order_idx]),
    )


def _evaluate(V, lam, mode, z):
    sys_ = assemble_system(V, z, lam)
    return secular_value(sys_, mode), sys_


def _grid_search(V, lam, mode, scale):
    N = V.shape[0]
    amp = (lam * norm2(V)) ** (1.0 / N)
    found = []
    for k in range(N):
        z = amp * np.exp(1j * (2 * np.pi * k + 0.5) / N)
        for _ in range(100):
            y, _sys = _evaluate(V, lam, mode, z)
            h = 1e-6 * scale
            fp = _evaluate(V, lam, mode, z + h)[0][-1]
            fm = _evaluate(V, lam, mode, z - h)[0][-1]
            df = (fp - fm) / (2 * h)
            # deflate: Newton on y_N / prod(z - found)
            g = df / y[-1] - sum(1.0 / (z - f[0]) for f in found) if y[-1] != 0 else np.inf
            if g == 0 or not np.isfinite(g):
                break
            step = 1.0 / g
            z = z - step
            if abs(step) <= 4e-16 * max(abs(z), scale):
                break
        else:
            raise RootFindingFailure(f"deflated Newton did not converge for root {k + 1} of {N}")
        y, sys_ = _evaluate(V, lam, mode, z)
        found.append((z, y, sys_))
    return found


# ---------------------------------------------------------------- structured families


@dataclass(frozen=True)
class PerturbationFamily:
    """``(lam V)_{jk} = lam^{e_jk} mu_jk`` with bounded coefficients ``mu``."""

    N: int
    mu: np.ndarray
    exponent: np.ndarray
    bound: float = 1.0

    def __post_init__(self):
        mu = as_matrix(self.mu)
        ex = np.array(self.exponent, dtype=float)
        if mu.shape != (self.N, self.N) or ex.shape != (self.N, self.N):
            raise ValueError(f"mu and exponent must both be {self.N} x {self.N}")
        if not np.all(np.isfinite(ex)):
            raise ValueError("exponents must be finite")
        if np.abs(mu).max() > self.bound * (1 + 1e-12):
            raise ValueError(f"|mu| exceeds declared bound {self.bound}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "exponent", ex)

    def scaled(self, lam: float) -> np.ndarray:
        """The matrix ``lam V`` at a given ``lam > 0``."""
        if lam <= 0:
            raise ValueError("lambda must be positive")
        return np.where(self.mu != 0, self.mu * lam ** self.exponent, 0).astype(complex)


def admissible_exponents(N: int) -> np.ndarray:
    """``(j - k + 1)/2`` on and below the diagonal (1-based), zero above."""
    j, k = np.indices((N, N))
    return np.where(j >= k, (j - k + 1) / 2.0, 0.0)


def benign_family(mu) -> PerturbationFamily:
    mu = as_matrix(mu)
    N = mu.shape[0]
    return PerturbationFamily(N, mu, admissible_exponents(N), bound=max(1.0, float(np.abs(mu).max())))


def corner_family(N: int, exponent: float = 1.0, coefficient: complex = 1.0) -> PerturbationFamily:
    """Only the bottom-left entry, scaling as ``lam^exponent``."""
    mu = np.zeros((N, N), dtype=complex)
    mu[N - 1, 0] = coefficient
    ex = np.zeros((N, N))
    ex[N - 1, 0] = exponent
    return PerturbationFamily(N, mu, ex, bound=max(1.0, abs(coefficient)))


@dataclass(frozen=True)
class Classification:
    benign: bool
    witness: Optional[tuple] = None

    @property
    def label(self) -> str:
        return "benign" if self.benign else "malign"


def classify_perturbation(family: PerturbationFamily) -> Classification:
    """Benign iff every nonzero entry on or below the diagonal is small enough.

    Entry ``(j, k)`` with ``j >= k`` (1-based) must scale at least as
    ``lam^((j-k+1)/2)``.  The witness is the first violating entry in
    row-major order, 1-based.
    """
    need = admissible_exponents(family.N)
    for j in range(family.N):
        for k in range(j + 1):
            if family.mu[j, k] != 0 and family.exponent[j, k] < need[j, k] - 1e-12:
                return Classification(False, (j + 1, k + 1))
    return Classification(True, None)


@dataclass(frozen=True)
class ReducedPerturbation:
    V_reduced: np.ndarray
    max_abs: float
    reconstruction_error: float


def rescale_reduced(family: PerturbationFamily, lam: float) -> ReducedPerturbation:
    """``lam^(-1/2) B^-1 (lam V) B`` with ``B = diag(lam^(j/2))``.

    Entries are formed as ``mu lam^(e - (j-k+1)/2)`` so that an exponent
    that exactly matches the admissible pattern yields ``mu`` with no
    rounding.  The reconstruction ``lam^(1/2) B V_red B^-1`` is checked
    against ``lam V`` by explicit products.
    """
    lam = float(lam)
    if not np.isfinite(lam) or lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    N = family.N
    j, k = np.indices((N, N))
    power = family.exponent - (j - k + 1) / 2.0
    Vr = np.where(family.mu != 0, family.mu * lam ** power, 0).astype(complex)
    B = np.diag(lam ** ((np.arange(N) + 1) / 2.0))
    Binv = np.diag(lam ** (-(np.arange(N) + 1) / 2.0))
    target = family.scaled(lam)
    back = np.sqrt(lam) * (B @ Vr @ Binv)
    ref = np.abs(target).max()
    err = float(np.abs(back - target).max() / ref) if ref > 0 else float(np.abs(back).max())
    return ReducedPerturbation(V_reduced=Vr, max_abs=float(np.abs(Vr).max()), reconstruction_error=err)


# ---------------------------------------------------------------- splitting exponents


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    stderr: float
    intercept: float
    lambdas: np.ndarray
    displacements: np.ndarray


def exponent_fit(H_ep, direction, lam_grid: Sequence[float]) -> ExponentFit:
    """Log-log slope of the largest eigenvalue displacement against ``lam``.

    ``direction`` is either a fixed matrix ``V`` (perturbation ``lam V``) or
    a :class:`PerturbationFamily` supplying ``lam V`` itself.  Displacements
    are measured from the centroid ``tr(H_ep)/N`` of the unperturbed
    (fully coalesced) spectrum.
    """
    H = as_matrix(H_ep)
    N = H.shape[0]
    lams = np.asarray(lam_grid, dtype=float)
    if lams.ndim != 1 or lams.size < 3 or np.any(lams <= 0):
        raise ValueError("lam_grid needs at least three positive values")
    if np.log10(lams.max() / lams.min()) < 3 - 1e-9:
        raise ValueError("lam_grid must span at least three decades")
    if isinstance(direction, PerturbationFamily):
        if direction.N != N:
            raise ValueError("family size does not match H_ep")
        perturb = direction.scaled
    else:
        V = as_matrix(direction)
        if V.shape != H.shape:
            raise ValueError("direction shape does not match H_ep")
        perturb = lambda lam: lam * V  # noqa: E731
    centre = np.trace(H) / N
    disp = np.array([np.abs(sla.eigvals(H + perturb(lam)) - centre).max() for lam in lams])
    if np.all(disp == 0):
        raise DegenerateData("all eigenvalue displacements are zero; nothing to fit")
    if np.any(disp <= 0):
        raise DegenerateData("some eigenvalue displacements are zero; log-log fit undefined")
    if disp.max() >= 0.1:
        log.warning("largest displacement %.3g exceeds 0.1; lambda grid may be outside the asymptotic regime", disp.max())
    fit = stats.linregress(np.log(lams), np.log(disp))
    return ExponentFit(
        slope=float(fit.slope),
        stderr=float(fit.stderr),
        intercept=float(fit.intercept),
        lambdas=lams,
        displacements=disp,
    )
