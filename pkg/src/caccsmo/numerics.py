"""Small numerical linear-algebra helpers shared across the toolkit."""

from __future__ import annotations

import numpy as np
import scipy.linalg

__all__ = [
    "pseudo_inverse",
    "matrix_exponential",
    "numeric_rank",
    "controllable_subspace",
]


def pseudo_inverse(M, tol: float = 1e-12) -> np.ndarray:
    """Moore-Penrose pseudo-inverse; singular values below tol*sigma_max are zeroed."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if not np.all(np.isfinite(M)):
        raise ValueError("pseudo_inverse requires a finite matrix")
    return np.linalg.pinv(M, rcond=tol)


def matrix_exponential(A, t: float = 1.0) -> np.ndarray:
    """expm(A*t) via scaling-and-squaring (scipy), t >= 0."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix_exponential requires a square matrix")
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0.0:
        return np.eye(A.shape[0])
    return scipy.linalg.expm(A * t)


def numeric_rank(M, tol: float = 1e-10) -> int:
    """Rank by singular values, zeroing those below tol*sigma_max."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def controllable_subspace(A, B, tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis (columns) of the Krylov/controllable subspace of (A, B)."""
    A = np.asarray(A, dtype=float)
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.shape[0] != A.shape[0]:
        B = B.T
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    K = np.hstack(blocks)
    U, s, _ = np.linalg.svd(K, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((n, 0))
    r = int(np.sum(s > tol * s[0]))
    return U[:, :r]
