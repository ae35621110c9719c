"""SVD-based rank and pseudo-inverse with an explicit, overridable threshold."""

import numpy as np


def default_tol(X: np.ndarray, s_max: float) -> float:
    return max(X.shape) * np.finfo(float).eps * s_max


def svd_rank(X: np.ndarray, tol: float | None = None) -> int:
    """Numerical rank: number of singular values above ``tol``.

    The default threshold is ``max(rows, cols) * eps * s_max``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.size == 0:
        return 0
    s = np.linalg.svd(X, compute_uv=False)
    if s[0] == 0.0:
        return 0
    if tol is None:
        tol = default_tol(X, s[0])
    return int(np.sum(s > tol))


def pinv(X: np.ndarray, tol: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudo-inverse truncated at the same threshold as :func:`svd_rank`."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(X.T.shape)
    if tol is None:
        tol = default_tol(X, s[0])
    keep = s > tol
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


def condition_number(X: np.ndarray) -> float:
    s = np.linalg.svd(np.atleast_2d(X), compute_uv=False)
    if s.size == 0 or s[-1] == 0.0:
        return float("inf")
    return float(s[0] / s[-1])
