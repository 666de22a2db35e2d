"""Independent reference computations used by the tests.

Nothing here imports the package; each oracle solves its problem by a
different route (closed forms, characteristic polynomials, finite
differences) so agreement is meaningful.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


def cubic_ground_energy_fd(L: float = 12.0, n: int = 6000) -> complex:
    """Lowest level of -psi'' + i x^3 psi on [-L, L] with Dirichlet ends.

    Second-order central differences on ``n`` interior points, followed by
    one Richardson step with ``n/2`` points to cancel the ``h^2`` error.
    """

    def lowest(m):
        x = np.linspace(-L, L, m + 2)[1:-1]
        h = x[1] - x[0]
        main = 2.0 / h**2 + 1j * x**3
        off = -np.ones(m - 1) / h**2
        A = sp.diags([off, main, off], [-1, 0, 1], format="csc")
        w = spla.eigs(A, k=4, sigma=1.0, return_eigenvectors=False)
        return w[np.argmin(np.abs(w - 1.0))], h

    e1, h1 = lowest(n)
    e2, h2 = lowest(n // 2)
    return (e1 * h2**2 - e2 * h1**2) / (h2**2 - h1**2)


def two_level_gap(t: float) -> float:
    """|E+ - E-| for [[1, t], [-t, -1]]: eigenvalues solve E^2 = 1 - t^2."""
    disc = 1.0 - t * t
    return 2.0 * np.sqrt(abs(disc))


def jordan_perturbation_roots(V: np.ndarray, lam: float) -> np.ndarray:
    """Eigenvalues of J_N(0) + lam V via the characteristic polynomial."""
    N = V.shape[0]
    H = np.eye(N, k=1) + lam * V
    return np.roots(np.poly(H))


def chain_coefficients_by_hand(E, K, p_max):
    """Plain-Python nested loops for the unit-diagonal coefficient triangle."""
    c = [[0.0] * (p_max + 1) for _ in range(p_max + 1)]
    c[0][0] = 1.0
    for k in range(1, p_max + 1):
        c[k][k] = 1.0
        for m in range(k):
            c[k][m] = c[k - 1][m] / (E[K + m] - E[K + k])
    return np.array(c, dtype=complex)


def ladder_x(M: int) -> np.ndarray:
    """Position matrix elements <m|x|n> = (sqrt(n) d_{m,n-1} + sqrt(n+1) d_{m,n+1}) / sqrt(2)."""
    X = np.zeros((M, M))
    for n in range(M):
        if n >= 1:
            X[n - 1, n] = np.sqrt(n / 2.0)
        if n + 1 < M:
            X[n + 1, n] = np.sqrt((n + 1) / 2.0)
    return X
