"""Dense linear-algebra and integration kernels shared by the other modules."""

from __future__ import annotations

import numpy as np


class NumericError(ArithmeticError):
    """A derivative or intermediate produced a non-finite value."""


class SingularMatrixError(np.linalg.LinAlgError):
    pass


def _square(A, name="matrix"):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square, got shape {A.shape}")
    return A


def rk4_step(state, t, h, derivative):
    """Advance ``state`` by one classical fourth-order Runge-Kutta step.

    ``derivative(state, t)`` returns the time derivative and must accept
    arrays of any shape; the state shape is preserved.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    state = np.asarray(state, dtype=float)

    def f(s, tt):
        out = np.asarray(derivative(s, tt), dtype=float)
        if not np.all(np.isfinite(out)):
            raise NumericError(f"non-finite derivative at t={tt}")
        return out

    k1 = f(state, t)
    k2 = f(state + 0.5 * h * k1, t + 0.5 * h)
    k3 = f(state + 0.5 * h * k2, t + 0.5 * h)
    k4 = f(state + h * k3, t + h)
    return state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def symmetrize(Y):
    Y = np.asarray(Y, dtype=float)
    return 0.5 * (Y + Y.T)


def min_eig(Y):
    """Smallest eigenvalue of the symmetric part of ``Y``."""
    Y = _square(Y, "Y")
    if Y.size == 0:
        return np.inf
    return float(np.linalg.eigvalsh(symmetrize(Y))[0])


def is_pd_above(Y, gamma):
    """True iff ``(Y + Y.T)/2 - gamma*I`` is positive definite.

    Integrated Gramians are symmetric only up to roundoff, hence the
    symmetrization before the eigenvalue test.
    """
    return min_eig(Y) > gamma


def pinv(A, rank_tol=None):
    """Moore-Penrose pseudoinverse via SVD.

    Singular values at or below ``rank_tol * s_max`` are treated as zero.
    The default tolerance is ``eps * max(rows, cols)``.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError("pinv expects a 2-D array")
    m, n = A.shape
    if A.size == 0:
        return np.zeros((n, m))
    if rank_tol is None:
        rank_tol = np.finfo(float).eps * max(m, n)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s[0] == 0.0:
        return np.zeros((n, m))
    keep = s > rank_tol * s[0]
    inv_s = np.zeros_like(s)
    inv_s[keep] = 1.0 / s[keep]
    return (Vt.T * inv_s) @ U.T


def range_projector(A, rank_tol=None):
    """Orthogonal projector onto the numerical range of ``A``, with its rank.

    Built as ``U_r U_r^T`` so it is symmetric and idempotent to rounding,
    unlike ``A A^+`` when ``A`` is ill-conditioned.
    """
    A = np.asarray(A, dtype=float)
    m, n = A.shape
    if A.size == 0:
        return np.zeros((m, m)), 0
    if rank_tol is None:
        rank_tol = np.finfo(float).eps * max(m, n)
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    if s[0] == 0.0:
        return np.zeros((m, m)), 0
    Ur = U[:, s > rank_tol * s[0]]
    return Ur @ Ur.T, Ur.shape[1]


def numerical_rank(A, rank_tol=None):
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0
    if rank_tol is None:
        rank_tol = np.finfo(float).eps * max(A.shape)
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rank_tol * s[0]))


def solve_right(Z, Y):
    """Return ``L`` with ``L @ Y == Z`` using a linear solve, not an inverse."""
    Y = _square(Y, "Y")
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[1] != Y.shape[0]:
        raise ValueError(f"shape mismatch: Z {Z.shape}, Y {Y.shape}")
    # L Y = Z  <=>  Y^T L^T = Z^T
    try:
        return np.linalg.solve(Y.T, Z.T).T
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(str(exc)) from exc


def frobenius(A):
    return float(np.sqrt(np.sum(np.square(np.asarray(A, dtype=float)))))
