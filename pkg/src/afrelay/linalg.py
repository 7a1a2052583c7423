"""Small dense complex linear algebra kernels.

Matrices are plain ``numpy`` complex128 arrays. Only the handful of
operations the relay model needs live here: a Cholesky-based inverse for
Hermitian positive definite matrices, the Sherman-Morrison rank-one
update, and a trace helper.
"""

import numpy as np
from scipy.linalg import solve_triangular

PIVOT_TOL = 1e-12
UPDATE_TOL = 1e-12
HERMITIAN_TOL = 1e-9


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a matrix is singular, indefinite or not Hermitian."""


def as_matrix(a):
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


def cholesky_lower(a):
    """Lower Cholesky factor ``L`` with ``a = L @ L^H``.

    Raises SingularMatrixError if any pivot drops below ``PIVOT_TOL``.
    """
    a = as_matrix(a)
    n, m = a.shape
    if n != m:
        raise ValueError(f"matrix must be square, got {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if np.max(np.abs(a - a.conj().T), initial=0.0) > HERMITIAN_TOL * scale:
        raise SingularMatrixError("matrix is not Hermitian within tolerance")

    low = np.zeros_like(a)
    for j in range(n):
        row = low[j, :j]
        pivot = a[j, j].real - np.vdot(row, row).real
        if pivot <= PIVOT_TOL:
            raise SingularMatrixError(
                f"pivot {pivot:.3e} at column {j} below tolerance {PIVOT_TOL:g}"
            )
        d = np.sqrt(pivot)
        low[j, j] = d
        if j + 1 < n:
            low[j + 1:, j] = (a[j + 1:, j] - low[j + 1:, :j] @ row.conj()) / d
    return low


def hermitian_inverse(a):
    """Inverse of a Hermitian positive definite matrix via Cholesky.

    The result is symmetrised so that it is exactly Hermitian.
    """
    low = cholesky_lower(a)
    n = low.shape[0]
    if n == 0:
        return np.zeros((0, 0), dtype=np.complex128)
    low_inv = solve_triangular(low, np.eye(n, dtype=np.complex128), lower=True)
    inv = low_inv.conj().T @ low_inv
    return 0.5 * (inv + inv.conj().T)


def rank_one_update_inverse(a_inv, x, y):
    """Return ``(A + x y^H)^-1`` given ``A^-1`` (Sherman-Morrison).

    ``x`` and ``y`` are 1-D vectors. Raises SingularMatrixError when
    ``|1 + y^H A^-1 x|`` is at most ``UPDATE_TOL``.
    """
    a_inv = as_matrix(a_inv)
    x = np.asarray(x, dtype=np.complex128).reshape(-1)
    y = np.asarray(y, dtype=np.complex128).reshape(-1)
    ax = a_inv @ x
    ya = y.conj() @ a_inv
    denom = 1.0 + y.conj() @ ax
    if abs(denom) <= UPDATE_TOL:
        raise SingularMatrixError(
            f"rank-one update is singular: |1 + y^H A^-1 x| = {abs(denom):.3e}"
        )
    return a_inv - np.outer(ax, ya) / denom


def trace_parts(a):
    """Real and imaginary parts of the diagonal sum of a square matrix."""
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix must be square, got {a.shape}")
    t = np.trace(a)
    return float(t.real), float(t.imag)


def trace_real(a):
    return trace_parts(a)[0]
