"""Dense linear algebra for small systems (d up to ~25).

Matrices are plain float64 numpy arrays. Symmetric inputs are checked,
never silently symmetrized.
"""

from __future__ import annotations

import warnings
from functools import lru_cache

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, SingularLyapunov, SingularMatrix

PIVOT_RTOL = 1e-12
PD_RTOL = 1e-10


def as_matrix(a, *, square: bool = False, name: str = "matrix") -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionMismatch(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if square and arr.shape[0] != arr.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def inf_norm(a: np.ndarray) -> float:
    """Induced infinity norm for matrices, max-abs for vectors."""
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        return float(np.max(np.abs(a))) if a.size else 0.0
    return float(np.max(np.sum(np.abs(a), axis=1)))


def solve_linear(a, b) -> np.ndarray:
    """Solve ``a @ x = b`` by LU with partial pivoting.

    Raises SingularMatrix when a pivot falls below ``1e-12 * ||a||_inf``.
    """
    a = as_matrix(a, square=True, name="a")
    b = np.asarray(b, dtype=float)
    if b.shape[0] != a.shape[0]:
        raise DimensionMismatch(f"rhs has length {b.shape[0]}, expected {a.shape[0]}")
    scale = inf_norm(a)
    if scale == 0.0:
        raise SingularMatrix("zero matrix")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    if np.min(np.abs(np.diag(lu))) < PIVOT_RTOL * scale:
        raise SingularMatrix(
            f"pivot {np.min(np.abs(np.diag(lu))):.3e} below {PIVOT_RTOL:g} * ||a||_inf"
        )
    return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)


def is_symmetric(s: np.ndarray, rtol: float = 1e-9) -> bool:
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        return False
    scale = max(float(np.max(np.abs(s))), 1e-300)
    return bool(np.max(np.abs(s - s.T)) <= rtol * scale)


def is_positive_definite(s) -> bool:
    """Cholesky test with every pivot required to exceed ``1e-10 * trace/dim``."""
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1] or not np.all(np.isfinite(s)):
        return False
    if not is_symmetric(s):
        return False
    dim = s.shape[0]
    trace = float(np.trace(s))
    if trace <= 0.0:
        return False
    pd_tol = PD_RTOL * trace / dim
    try:
        chol = np.linalg.cholesky(s)
    except np.linalg.LinAlgError:
        return False
    return bool(np.min(np.diag(chol)) ** 2 > pd_tol)


@lru_cache(maxsize=64)
def _sym_layout(d: int):
    rows, cols = np.triu_indices(d)
    full_idx = rows * d + cols
    mirror_idx = cols * d + rows
    return rows, cols, full_idx, mirror_idx


def lyapunov_operator(a: np.ndarray) -> np.ndarray:
    """Matrix of ``S -> A S + S A^T`` restricted to symmetric S.

    Rows and columns are both indexed by the upper triangle in
    ``np.triu_indices`` order, giving a d(d+1)/2 square system.
    """
    d = a.shape[0]
    eye = np.eye(d)
    full = np.kron(a, eye) + np.kron(eye, a)
    _, _, full_idx, mirror_idx = _sym_layout(d)
    sub = full[full_idx]
    op = sub[:, full_idx].copy()
    off = full_idx != mirror_idx
    op[:, off] += sub[:, mirror_idx[off]]
    return op


def sym_to_vec(s: np.ndarray) -> np.ndarray:
    rows, cols, _, _ = _sym_layout(s.shape[0])
    return s[rows, cols]


def vec_to_sym(v: np.ndarray, d: int) -> np.ndarray:
    rows, cols, _, _ = _sym_layout(d)
    s = np.zeros((d, d))
    s[rows, cols] = v
    s[cols, rows] = v
    return s


def solve_lyapunov_forward(a, d_mat) -> np.ndarray:
    """Return the symmetric Sigma with ``A Sigma + Sigma A^T = -D``."""
    a = as_matrix(a, square=True, name="A")
    d_mat = as_matrix(d_mat, square=True, name="D")
    if a.shape != d_mat.shape:
        raise DimensionMismatch(f"A is {a.shape} but D is {d_mat.shape}")
    if not is_symmetric(d_mat):
        raise ValueError("D must be symmetric")
    d = a.shape[0]
    try:
        v = solve_linear(lyapunov_operator(a), -sym_to_vec(d_mat))
    except SingularMatrix as exc:
        raise SingularLyapunov(f"Lyapunov operator is singular: {exc}") from None
    return vec_to_sym(v, d)


def lyapunov_residual(a, sigma, d_mat) -> float:
    a = np.asarray(a, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    d_mat = np.asarray(d_mat, dtype=float)
    if not (a.shape == sigma.shape == d_mat.shape):
        raise DimensionMismatch(f"shapes {a.shape}, {sigma.shape}, {d_mat.shape} do not conform")
    r = a @ sigma + sigma @ a.T + d_mat
    return float(np.max(np.abs(r)))


def lyapunov_scale(a, sigma, d_mat) -> float:
    """Reference magnitude ``||A|| ||Sigma|| + ||D||`` for relative residual checks."""
    return inf_norm(a) * inf_norm(sigma) + inf_norm(d_mat)


def correlation(sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (R, s) with ``sigma = diag(s) R diag(s)``."""
    s = np.sqrt(np.diag(sigma))
    r = sigma / np.outer(s, s)
    np.fill_diagonal(r, 1.0)
    return r, s
