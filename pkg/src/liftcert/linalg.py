"""Dense real linear algebra used throughout the package."""

import numpy as np
import scipy.linalg

from .errors import DimensionError, SymmetryError

__all__ = [
    "DEFAULT_RANK_TOL",
    "kron",
    "expm",
    "pinv",
    "kernel_basis",
    "sym_eig",
    "is_symmetric",
    "sym",
    "blkdiag",
    "min_eig",
    "max_eig",
]

#: relative singular value cutoff for pseudoinverses and kernel bases
DEFAULT_RANK_TOL = 1e-9


def kron(a, b):
    """Kronecker product."""
    return np.kron(np.atleast_2d(a), np.atleast_2d(b))


def expm(a):
    """Matrix exponential (scaling and squaring with Pade approximants)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"expm needs a square matrix, got {a.shape}")
    if a.size == 0:
        return np.zeros_like(a)
    return scipy.linalg.expm(a)


def _svd(a):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return a, np.zeros((a.shape[0], 0)), np.zeros(0), np.eye(a.shape[1])
    u, s, vt = np.linalg.svd(a, full_matrices=True)
    return a, u, s, vt


_TINY = np.finfo(float).tiny


def pinv(a, tol=DEFAULT_RANK_TOL):
    """Moore-Penrose pseudoinverse.

    Singular values below ``tol * sigma_max`` are treated as zero, and so
    are subnormal ones (their reciprocals overflow).
    """
    a, u, s, vt = _svd(a)
    if s.size == 0 or s[0] < _TINY:
        return np.zeros(a.shape[::-1])
    keep = (s > tol * s[0]) & (s >= _TINY)
    r = int(keep.sum())
    return (vt[:r].T / s[:r]) @ u[:, :r].T


def kernel_basis(a, tol=DEFAULT_RANK_TOL):
    """Orthonormal basis (as columns) of the numerical null space of ``a``."""
    a, _, s, vt = _svd(a)
    ncols = a.shape[1]
    if s.size == 0 or s[0] < _TINY:
        return np.eye(ncols)
    rank = int(((s > tol * s[0]) & (s >= _TINY)).sum())
    return vt[rank:].T.copy()


def is_symmetric(s, rtol=1e-12):
    s = np.asarray(s)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        return False
    if s.size == 0:
        return True
    return np.max(np.abs(s - s.T)) <= rtol * (1.0 + np.max(np.abs(s)))


def sym(s):
    """Symmetric part."""
    s = np.asarray(s, dtype=float)
    return 0.5 * (s + s.T)


def sym_eig(s, rtol=1e-12):
    """Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix."""
    s = np.atleast_2d(np.asarray(s, dtype=float))
    if not is_symmetric(s, rtol):
        raise SymmetryError("sym_eig called on a matrix that is not symmetric")
    if s.size == 0:
        return np.zeros(0), np.zeros((0, 0))
    return np.linalg.eigh(sym(s))


def min_eig(s):
    s = np.atleast_2d(np.asarray(s, dtype=float))
    if s.size == 0:
        return np.inf
    return float(np.linalg.eigvalsh(sym(s))[0])


def max_eig(s):
    s = np.atleast_2d(np.asarray(s, dtype=float))
    if s.size == 0:
        return -np.inf
    return float(np.linalg.eigvalsh(sym(s))[-1])


def blkdiag(*mats):
    """Block-diagonal matrix; accepts empty blocks."""
    mats = [np.atleast_2d(np.asarray(m, dtype=float)) for m in mats]
    return scipy.linalg.block_diag(*mats) if mats else np.zeros((0, 0))
