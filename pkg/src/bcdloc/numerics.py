"""Small dense symmetric linear algebra used by both solvers."""

import numpy as np
from scipy.linalg.lapack import dposv


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    pass


def sym(A):
    """Return the symmetric part of a square matrix as a float array."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    return 0.5 * (A + A.T)


def solve_spd(A, b):
    """Solve ``A x = b`` for symmetric positive-definite ``A``.

    Parameters
    ----------
    A : (m, m) array_like
        Symmetric positive-definite matrix. Only its symmetric part is used.
    b : (m,) or (m, k) array_like
        Right-hand side.

    Returns
    -------
    x : ndarray
        Solution with the same trailing shape as ``b``.

    Raises
    ------
    NotPositiveDefiniteError
        If the Cholesky factorization meets a non-positive pivot.
    """
    A = sym(A)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != A.shape[0]:
        raise ValueError(f"right-hand side has {b.shape[0]} rows, matrix has {A.shape[0]}")
    # one LAPACK call: Cholesky factorization and the two triangular solves
    _, x, info = dposv(A, b, lower=1)
    if info > 0:
        raise NotPositiveDefiniteError("not positive definite")
    if info < 0:
        raise ValueError(f"invalid argument {-info} to the Cholesky solver")
    return x


def eig_sym(X):
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Returns ``(w, Q)`` with ``X = Q @ diag(w) @ Q.T`` and orthonormal ``Q``.
    """
    w, Q = np.linalg.eigh(sym(X))
    return w[::-1].copy(), Q[:, ::-1].copy()


def min_eig(X):
    """Smallest eigenvalue of a symmetric matrix (or a stack of them)."""
    X = np.asarray(X, dtype=float)
    return np.linalg.eigvalsh(0.5 * (X + np.swapaxes(X, -1, -2)))[..., 0]
