"""Small dense linear-algebra kernels.

Everything here operates on ``k x k`` or ``n x k`` float64 arrays with
``k`` bounded by the quasi-Newton memory, so LAPACK through numpy/scipy is
used directly; the wrappers pin down sign conventions, symmetrization and
the error contract the rest of the package relies on.
"""
from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg

from .errors import IllConditionedMetric, InvalidArgument, NumericFailure, SingularSystem

__all__ = ["qr_thin", "sym_eig", "gen_sym_eig", "solve_small", "symmetrize"]


def _as_matrix(A, name="A"):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise InvalidArgument(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidArgument(f"{name} contains non-finite entries")
    return A


def symmetrize(A):
    A = np.asarray(A, dtype=np.float64)
    return 0.5 * (A + A.T)


def qr_thin(A):
    """Thin QR factorization with a nonnegative diagonal in ``R``.

    Parameters
    ----------
    A : (n, k) array_like
        Columns may be linearly dependent; requires ``n >= k``.

    Returns
    -------
    Q : (n, k) ndarray with orthonormal columns
    R : (k, k) upper-triangular ndarray, ``diag(R) >= 0``
    """
    A = _as_matrix(A)
    n, k = A.shape
    if n < k:
        raise InvalidArgument(f"qr_thin needs n >= k, got {n} x {k}")
    if k == 0:
        return np.zeros((n, 0)), np.zeros((0, 0))
    # Householder QR keeps Q orthonormal even when A is rank deficient.
    Q, R = np.linalg.qr(A, mode="reduced")
    signs = np.where(np.diag(R) < 0.0, -1.0, 1.0)
    return Q * signs, R * signs[:, None]


def sym_eig(A):
    """Eigendecomposition of a symmetric matrix, eigenvalues ascending.

    ``A`` is symmetrized as ``(A + A.T) / 2`` before factoring.
    Returns ``(P, lambdas)`` with ``A = P @ diag(lambdas) @ P.T``.
    """
    A = _as_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise InvalidArgument(f"sym_eig needs a square matrix, got {A.shape}")
    if A.shape[0] == 0:
        return np.zeros((0, 0)), np.zeros(0)
    try:
        lambdas, P = np.linalg.eigh(symmetrize(A))
    except np.linalg.LinAlgError as exc:
        raise NumericFailure(f"symmetric eigensolver did not converge: {exc}") from exc
    return P, lambdas


def gen_sym_eig(A, B):
    """Eigenvalues of the symmetric-definite pencil ``A u = lambda B u``.

    ``B`` must be symmetric positive definite: its smallest eigenvalue has
    to exceed ``1e-12 * trace(B) / k``. Otherwise :class:`IllConditionedMetric`
    is raised so the caller can fall back.
    """
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    k = A.shape[0]
    if A.shape != (k, k) or B.shape != (k, k):
        raise InvalidArgument(f"shape mismatch: A {A.shape}, B {B.shape}")
    if k == 0:
        return np.zeros(0)
    A = symmetrize(A)
    B = symmetrize(B)
    b_min = np.linalg.eigvalsh(B)[0]
    if not b_min > 1e-12 * np.trace(B) / k:
        raise IllConditionedMetric(
            f"metric matrix is not positive definite (min eigenvalue {b_min:.3e})"
        )
    try:
        lambdas = scipy.linalg.eigh(A, B, eigvals_only=True)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise IllConditionedMetric(str(exc)) from exc
    return np.sort(lambdas)


def solve_small(A, X):
    """Solve ``A @ Z = X`` for a small square ``A`` by pivoted LU.

    Returns ``(Z, cond)`` where ``cond`` is the 2-norm condition number
    of ``A`` (cheap at these sizes). Raises :class:`SingularSystem` if a
    pivot falls below ``1e-14 * ||A||_F``.
    """
    A = _as_matrix(A, "A")
    X = np.asarray(X, dtype=np.float64)
    vector_rhs = X.ndim == 1
    if vector_rhs:
        X = X[:, None]
    k = A.shape[0]
    if A.shape != (k, k) or X.shape[0] != k:
        raise InvalidArgument(f"shape mismatch: A {A.shape}, X {X.shape}")
    if k == 0:
        Z = np.zeros_like(X)
        return (Z[:, 0] if vector_rhs else Z), 1.0
    with warnings.catch_warnings():
        # exact zero pivots are reported below as SingularSystem
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min() <= 1e-14 * np.linalg.norm(A):
        raise SingularSystem(f"matrix is singular to working precision (min pivot {pivots.min():.3e})")
    Z = scipy.linalg.lu_solve((lu, piv), X, check_finite=False)
    cond = np.linalg.cond(A)
    return (Z[:, 0] if vector_rhs else Z), float(cond)
